"""Discrete Volterra laboratory for one and two springs.

Tiny direct time-steppers for the free-space spring system at M = 1, 2
with piecewise-constant (p=1) or piecewise-linear (p=2) density
interpolants, written straight from the scalar recurrences rather than
through the production operator machinery, so the two implementations
check each other.  Also: characteristic-polynomial root analysis for the
two-spring explicit scheme, an empirical check of the implicit scheme's
norm bound, and convergence-order measurement against manufactured
densities.

Conventions: alpha = beta dt / 2, kappa = L / dt, s = floor(kappa).
Density vectors run sigma^0..sigma^N with sigma^0 = -g^0 (the t = 0
equation is algebraic).  The cumulative sums carry full weight alpha on
every past step including nu = 0, so runs meant to match the
trapezoid-exact reference marcher should use data with g^0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potential import GaussianDensity, SpringSet, manufactured_data

__all__ = [
    "SchemeParams", "march_m1", "march_m2", "char_roots_m2_p1", "CharRoots",
    "verify_stability_bound", "measure_convergence_m2", "bounded_after_data",
]


@dataclass(frozen=True)
class SchemeParams:
    """Derived weights for the two-spring schemes at separation L.

    regime "close" (kappa < 1): the delayed endpoint lands in the current
    step, the cross term is implicit with
        xi1 = alpha (2 - kappa^2) / 2,   xi2 = alpha (1 - kappa)^2 / 2.
    regime "separated" (kappa >= 1): fully explicit with
        xi1 = (alpha/2) [(1 - kappa + s)(1 + kappa - s) + 1],
        xi2 = (alpha/2) (1 - kappa + s)^2.
    """

    beta: float
    L: float
    dt: float
    alpha: float = field(init=False)
    kappa: float = field(init=False)
    s: int = field(init=False)
    alpha_tilde: float = field(init=False)
    xi1: float = field(init=False)
    xi2: float = field(init=False)
    regime: str = field(init=False)

    def __post_init__(self):
        if not (self.beta > 0 and self.dt > 0 and self.L > 0):
            raise ValueError("beta, L, dt must all be positive")
        alpha = 0.5 * self.beta * self.dt
        kappa = self.L / self.dt
        s = int(math.floor(kappa))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "alpha_tilde", (s + 1 - kappa) * alpha)
        if kappa < 1.0:
            xi1 = alpha * (2.0 - kappa ** 2) / 2.0
            xi2 = alpha * (1.0 - kappa) ** 2 / 2.0
            regime = "close"
        else:
            r = 1.0 - kappa + s   # in (0, 1]
            xi1 = 0.5 * alpha * (r * (2.0 - r) + 1.0)
            xi2 = 0.5 * alpha * r ** 2
            regime = "separated"
        object.__setattr__(self, "xi1", xi1)
        object.__setattr__(self, "xi2", xi2)
        object.__setattr__(self, "regime", regime)


def march_m1(p: int, alpha: float, g) -> np.ndarray:
    """March the single-spring discrete equation on data g^0..g^N.

    p=1:  sigma^{n+1} + alpha * sum_{nu<=n} sigma^nu = -g^{n+1}
    p=2:  (1 + alpha/2) sigma^{n+1} + alpha * sum_{nu<=n} sigma^nu = -g^{n+1}
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = np.asarray(g, dtype=float)
    sig = np.zeros_like(g)
    sig[0] = -g[0]
    diag = 1.0 if p == 1 else 1.0 + alpha / 2.0
    run = 0.0
    for n in range(g.size - 1):
        run += sig[n]
        sig[n + 1] = (-g[n + 1] - alpha * run) / diag
    return sig


def march_m2(params: SchemeParams, g1, g2, p: int = 2,
             scheme: str | None = None):
    """March the coupled two-spring discrete equations.

    p=1 handles any separation through the bisected weight alpha_tilde.
    p=2 dispatches on params.regime: "close" solves the 2x2 implicit
    system each step, "separated" is explicit.  Passing scheme= forces a
    regime and raises on mismatch with the parameters.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if g1.shape != g2.shape or g1.ndim != 1:
        raise ValueError("g1, g2 must be equal-length 1-d arrays")
    if scheme is not None and p == 2 and scheme != params.regime:
        raise ValueError(f"scheme {scheme!r} inconsistent with kappa = "
                         f"{params.kappa:.6g} ({params.regime})")

    N = g1.size - 1
    a, s = params.alpha, params.s
    sig = np.zeros((2, N + 1))
    sig[0, 0] = -g1[0]
    sig[1, 0] = -g2[0]
    g = np.stack([g1, g2])
    own = np.zeros(2)          # sum_{nu<=n} sigma_i
    cross = np.zeros(2)        # sum over the cross sum's full cells

    if p == 1:
        at = params.alpha_tilde
        for n in range(N):
            own += sig[:, n]
            if n - s - 1 >= 0:
                cross += sig[:, n - s - 1]
            tail = at * sig[:, n - s] if n - s >= 0 else 0.0
            sig[:, n + 1] = -g[:, n + 1] - a * own - (a * cross + tail)[::-1]
        return sig[0], sig[1]

    x1, x2 = params.xi1, params.xi2
    diag = 1.0 + a / 2.0
    if params.regime == "close":
        # implicit cross term: solve [[diag, x2], [x2, diag]] each step
        det = diag * diag - x2 * x2
        for n in range(N):
            own += sig[:, n]
            if n - 1 >= 0:
                cross += sig[:, n - 1]
            r = -g[:, n + 1] - a * own - (a * cross + x1 * sig[:, n])[::-1]
            sig[0, n + 1] = (diag * r[0] - x2 * r[1]) / det
            sig[1, n + 1] = (diag * r[1] - x2 * r[0]) / det
        return sig[0], sig[1]

    for n in range(N):
        own += sig[:, n]
        if n - s - 1 >= 0:
            cross += sig[:, n - s - 1]
        tail = np.zeros(2)
        if n - s >= 0:
            tail += x1 * sig[:, n - s]
        if n + 1 - s >= 0:
            tail += x2 * sig[:, n + 1 - s]
        sig[:, n + 1] = (-g[:, n + 1] - a * own - (a * cross + tail)[::-1]) / diag
    return sig[0], sig[1]


@dataclass(frozen=True)
class CharRoots:
    """Roots of the two characteristic factors of the p=1 two-spring
    scheme, plus an argument-principle cross-check of the counts."""

    roots_plus: np.ndarray
    roots_minus: np.ndarray
    unit_root_defect: float       # |z* - 1| for the p_minus root nearest 1
    max_other_magnitude: float    # max |z| over all remaining roots
    winding_plus: int             # roots of p_plus inside |z| = 1 - 1e-6
    winding_minus: int


def _poly_coeffs(alpha: float, kappa: float, sign: float) -> np.ndarray:
    s = int(math.floor(kappa))
    at = (s + 1 - kappa) * alpha
    c = np.zeros(s + 3)
    c[0] = 1.0
    c[1] += alpha - 1.0
    c[s + 1] += sign * at
    c[s + 2] += sign * (alpha - at)
    return c


def _winding_count(coeffs: np.ndarray, r: float, n: int = 1 << 14) -> int:
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    vals = np.polyval(coeffs, r * np.exp(1j * th))
    if np.abs(vals).min() == 0.0:
        raise RuntimeError("characteristic polynomial vanishes on contour")
    ph = np.angle(vals)
    dph = np.diff(np.concatenate([ph, ph[:1]]))
    dph = (dph + np.pi) % (2.0 * np.pi) - np.pi
    return int(round(dph.sum() / (2.0 * np.pi)))


def char_roots_m2_p1(alpha: float, kappa: float) -> CharRoots:
    """Roots of p_+-(z) = z^{s+2} + (alpha-1) z^{s+1} +- (at z + alpha - at).

    Computed as companion-matrix eigenvalues; the count of roots inside
    the (slightly shrunk) unit circle is cross-checked by an
    argument-principle winding integral, guarding against eigenvalue
    trouble at large delay s.  For alpha in (0,1) the expected picture is
    a simple root of p_minus at z = 1 with everything else inside.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    cp = _poly_coeffs(alpha, kappa, +1.0)
    cm = _poly_coeffs(alpha, kappa, -1.0)
    rp = np.roots(cp)
    rm = np.roots(cm)
    i1 = int(np.argmin(np.abs(rm - 1.0)))
    others = np.concatenate([rp, np.delete(rm, i1)])
    return CharRoots(
        roots_plus=rp,
        roots_minus=rm,
        unit_root_defect=float(np.abs(rm[i1] - 1.0)),
        max_other_magnitude=float(np.abs(others).max()),
        winding_plus=_winding_count(cp, 1.0 - 1e-6),
        winding_minus=_winding_count(cm, 1.0 - 1e-6),
    )


def verify_stability_bound(L: float, beta: float, dt: float,
                           trials: int = 100, n_steps: int = 500,
                           seed: int = 0):
    """Empirically test ||sigma||_2 <= C ||g||_2 with C = 1/(1 - L beta/2).

    Runs the implicit close-regime scheme on random data vectors (g^0 = 0
    so the step-0 density stays out of the norm, matching the bound's
    vector convention).  Raises if any trial exceeds C; returns the
    observed maximum ratio and C.
    """
    if not L < 2.0 / beta:
        raise ValueError("bound regime needs L < 2/beta")
    if not dt > L:
        raise ValueError("bound regime needs dt > L")
    params = SchemeParams(beta=beta, L=L, dt=dt)
    C = 1.0 / (1.0 - L * beta / 2.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        g = rng.standard_normal((2, n_steps + 1))
        g[:, 0] = 0.0
        s1, s2 = march_m2(params, g[0], g[1], p=2)
        num = math.hypot(np.linalg.norm(s1[1:]), np.linalg.norm(s2[1:]))
        den = np.linalg.norm(g[:, 1:])
        ratio = num / den
        if ratio > C:
            raise RuntimeError(f"stability bound violated: {ratio} > C={C}")
        worst = max(worst, ratio)
    return worst, C


def measure_convergence_m2(beta: float, L: float, T: float, dts,
                           p: int = 2, mu=(6.0, 5.0), t0=(2.4, 2.6)):
    """Convergence order of the two-spring scheme on manufactured data.

    Prescribes Gaussian densities, builds the exact data vector through
    the closed-form potentials, marches at each dt, and measures
    max over n of |e1^n| + |e2^n|.  Returns (lsq slope, errors).
    """
    dts = list(dts)
    if p == 2 and not all(dt < min(2.0 / beta, L) for dt in dts):
        raise ValueError("p=2 theorem regime needs dt < min(2/beta, L)")
    springs = SpringSet(x=np.array([-L / 2.0, L / 2.0]),
                        beta=np.array([beta, beta]))
    dens = [GaussianDensity(mu=mu[0], t0=t0[0]),
            GaussianDensity(mu=mu[1], t0=t0[1])]
    errs = []
    for dt in dts:
        n = int(round(T / dt))
        tg = np.arange(n + 1) * dt
        g = manufactured_data(springs, dens, tg, bc="free")
        params = SchemeParams(beta=beta, L=L, dt=dt)
        s1, s2 = march_m2(params, g[:, 0], g[:, 1], p=p)
        e1 = np.abs(s1 - dens[0](tg))
        e2 = np.abs(s2 - dens[1](tg))
        errs.append(float((e1 + e2).max()))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return float(slope), errs


def bounded_after_data(sig1, sig2, n_data: int, factor: float = 2.0) -> bool:
    """Uniform-boundedness check: the post-data density magnitudes never
    exceed `factor` times the maximum seen while data was active."""
    s = np.abs(np.stack([sig1, sig2]))
    during = s[:, : n_data + 1].max()
    after = s[:, n_data + 1:].max() if s.shape[1] > n_data + 1 else 0.0
    return bool(after <= factor * during)
