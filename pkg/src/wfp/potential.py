"""Slow-but-sure scattering machinery used as ground truth elsewhere.

This module holds the 1D wave Green's function, closed-form single-layer
potentials for Gaussian densities, manufactured data construction, and
naive Volterra marchers that carry the full density history. Everything
is written for clarity at small M; the fast solver lives in `marcher`.

The integral-equation convention: densities sigma_j satisfy

    sigma_j(t) + (beta_j/2) * sum_l int_0^{t-d_jl} sigma_l(tau) dtau = -g_j(t)

with d_jl the (possibly periodized) distance between springs j and l, and
the scattered field is u(x,t) = (1/2) sum_j int_0^{t-|x-x_j|} sigma_j.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import erf, wofz

from .fields import SpaceTimeField
from .quadrature import gauss_legendre_on, interp_weights

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# problem data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpringSet:
    """Point scatterers: positions in [-pi, pi) and stiffnesses beta_j >= 0.

    Positions must be pairwise distinct. beta_j = 0 is permitted so that
    data-generation code can describe passive probe points, but a physical
    scatterer has beta_j > 0.
    """

    x: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if x.ndim != 1 or beta.shape != x.shape:
            raise ValueError("positions and strengths must be 1D and equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(beta))):
            raise ValueError("positions and strengths must be finite")
        if np.any(x < -np.pi) or np.any(x >= np.pi):
            raise ValueError("positions must lie in [-pi, pi)")
        if np.any(beta < 0):
            raise ValueError("spring strengths must be nonnegative")
        if x.size > 1:
            xs = np.sort(x)
            gap = min(np.diff(xs).min(), xs[0] - xs[-1] + TWO_PI)
            if gap <= 0.0:
                raise ValueError("coincident spring positions are not allowed")
        x.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "beta", beta)

    @property
    def M(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class GaussianDensity:
    """Prescribed density sigma(t) = exp(-mu (t - t0)^2), mu > 0."""

    mu: float
    t0: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.mu * (t - self.t0) ** 2)

    def integral(self, T):
        """int_0^T sigma(tau) dtau in closed form; zero for T <= 0."""
        T = np.maximum(np.asarray(T, dtype=float), 0.0)
        r = np.sqrt(self.mu)
        return 0.5 * np.sqrt(np.pi / self.mu) * (
            erf(r * (T - self.t0)) + erf(r * self.t0)
        )

    def bandlimit(self, eps: float = 1e-12) -> float:
        """Frequency beyond which the spectrum falls under eps (relative)."""
        return 2.0 * np.sqrt(self.mu * np.log(1.0 / eps))


def _cos_gauss_antideriv(z, b: float):
    """F(z) = int_0^z cos(2 b y) e^{-y^2} dy, stable for large b.

    F(z) = (sqrt(pi)/2) e^{-b^2} Re erf(z + i b); erf(z + i b) grows like
    e^{+b^2}, so the product is formed through the scaled complex error
    function w(i z - b), which stays O(1) for z >= 0.
    """
    z = np.asarray(z, dtype=float)
    za = np.abs(z)
    w = wofz(1j * za - b)
    g = np.exp(-b * b) - (np.exp(-(za ** 2)) * np.exp(-2j * za * b) * w).real
    return 0.5 * np.sqrt(np.pi) * np.sign(z) * g


@dataclass(frozen=True)
class ModulatedGaussianDensity:
    """Prescribed density sigma(t) = cos(omega0 (t - t0)) exp(-mu (t - t0)^2).

    The carrier moves the spectral mass near +-omega0, so refining the step
    while the mode cutoff rides along keeps the discretization error above
    the roundoff floor long enough to measure clean convergence slopes.
    """

    mu: float
    t0: float
    omega0: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.omega0 < 0:
            raise ValueError("omega0 must be nonnegative")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = t - self.t0
        return np.cos(self.omega0 * s) * np.exp(-self.mu * s ** 2)

    def integral(self, T):
        """int_0^T sigma(tau) dtau in closed form; zero for T <= 0."""
        T = np.maximum(np.asarray(T, dtype=float), 0.0)
        r = np.sqrt(self.mu)
        b = self.omega0 / (2.0 * r)
        return (_cos_gauss_antideriv(r * (T - self.t0), b)
                - _cos_gauss_antideriv(-r * self.t0, b)) / r

    def bandlimit(self, eps: float = 1e-12) -> float:
        return self.omega0 + 2.0 * np.sqrt(self.mu * np.log(1.0 / eps))


@dataclass(frozen=True)
class IncidentPulse:
    """Right-moving Gaussian pulse u_inc(x,t) = f(x - t), f(s) = e^{-mu (s + t0)^2}.

    The crest passes position x at time t = x + t0, so choosing t0 larger
    than ~3/sqrt(mu) plus the leftmost scatterer coordinate keeps the pulse
    support clear of the scatterers at t = 0.
    """

    mu: float
    t0: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-self.mu * (s + self.t0) ** 2)

    def field(self, x, t):
        return self.profile(np.asarray(x, dtype=float) - np.asarray(t, dtype=float))

    def data(self, springs: SpringSet, t):
        """Driving vector g_j(t) = beta_j * u_inc(x_j, t).

        For a smooth pulse the incident field has no derivative jump at the
        springs, so the data reduces to the field values scaled by beta.
        """
        t = np.asarray(t, dtype=float)
        return springs.beta * self.field(springs.x, t[..., None])

    def spectrum_envelope(self, omega):
        """|f_hat(omega)| = sqrt(pi/mu) * exp(-omega^2 / (4 mu))."""
        omega = np.asarray(omega, dtype=float)
        return np.sqrt(np.pi / self.mu) * np.exp(-(omega ** 2) / (4.0 * self.mu))


# ---------------------------------------------------------------------------
# closed-form potentials and manufactured data
# ---------------------------------------------------------------------------

def greens_free(x, t):
    """Free-space 1D wave Green's function (1/2) H(t - |x|), H(0) = 1."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.where(t - np.abs(x) >= 0.0, 0.5, 0.0)


def _image_range(t_max: float) -> int:
    # images with |dx - 2 pi m| <= t can contribute; |dx| <= pi
    return int(np.ceil((t_max + np.pi) / TWO_PI)) + 1


def slp_gaussian_exact(springs: SpringSet, densities, x, t, bc: str = "free",
                       image_count: int | None = None):
    """Single-layer potential of Gaussian densities, via the error function.

    Parameters
    ----------
    densities : sequence of GaussianDensity, one per spring.
    x, t : scalars or broadcastable arrays.
    bc : "free" for the whole-line potential, "periodic" to sum 2 pi images.

    Returns u(x, t) with the same broadcast shape as x - t.
    """
    if len(densities) != springs.M:
        raise ValueError("need exactly one density per spring")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if bc == "free":
        shifts = [0.0]
    elif bc == "periodic":
        n_img = _image_range(float(np.max(t))) if image_count is None else image_count
        shifts = [TWO_PI * m for m in range(-n_img, n_img + 1)]
    else:
        raise ValueError(f"unknown bc {bc!r}")
    u = np.zeros(np.broadcast(x, t).shape)
    for xj, dens in zip(springs.x, densities):
        for sh in shifts:
            u = u + 0.5 * dens.integral(t - np.abs(x - xj - sh))
    return u


def manufactured_data(springs: SpringSet, densities, t, bc: str = "free"):
    """Data vector g_j(t) = -sigma_j(t) - beta_j * u(x_j, t) for prescribed
    Gaussian densities, so that the Volterra system's exact solution is the
    prescribed densities themselves.

    t may be a scalar (returns shape (M,)) or an array (returns (..., M)).
    """
    t = np.asarray(t, dtype=float)
    tcol = t[..., None]
    sig = np.stack([d(t) for d in densities], axis=-1)
    u_at = np.stack(
        [slp_gaussian_exact(springs, densities, xj, tcol[..., 0], bc=bc)
         for xj in springs.x],
        axis=-1,
    )
    return -sig - springs.beta * u_at


# ---------------------------------------------------------------------------
# running-sum increment weights (shared with the stability module)
# ---------------------------------------------------------------------------

def _cell_weights(a: float, b: float, m0: int, p: int) -> np.ndarray:
    """Exactly integrate the degree-(p-1) Lagrange basis on nodes m0..m0+p-1
    over [a, b] (grid units). Returns the p basis integrals."""
    n_nodes = p // 2 + 1
    nodes, wq = gauss_legendre_on(a, b, n_nodes)
    v = interp_weights(nodes, np.full(nodes.size, m0, dtype=np.int64), p)
    return wq @ v


def pair_increment_weights(d: float, dt: float, p: int):
    """One-step growth of I(t) = int_0^{t-d} sigma for a source at delay d.

    At the step t_n -> t_{n+1} the integral gains the slab
    [t_n - d, t_{n+1} - d]. The slab is bisected at its interior grid time
    and the degree-(p-1) interpolant of sigma is integrated exactly on each
    piece. Stencils are centered per cell, then clamped so no index beyond
    n+1 is referenced; indices before t=0 read as zero (densities vanish
    identically for t <= 0).

    Returns
    -------
    offsets : int array, ascending, offsets[r] >= 0
    weights : float array
        The increment is dt * sum_r weights[r] * sigma^{(n+1) - offsets[r]}.
        An offset of 0 marks an implicit contribution from sigma^{n+1}.
    """
    if d < 0:
        raise ValueError("delay must be nonnegative")
    kappa = d / dt
    s = int(np.floor(kappa + 1e-9))
    f = kappa - s
    if f < 1e-9:
        f = 0.0

    # work with n+1 = 0 so grid indices are direct negatives of offsets
    c = -1 - s
    acc: dict[int, float] = {}

    def add_piece(a, b, cell):
        m0 = cell - (p - 1) // 2
        if m0 + p - 1 > 0:
            m0 = 1 - p
        w = _cell_weights(a, b, m0, p)
        for r in range(p):
            off = -(m0 + r)
            acc[off] = acc.get(off, 0.0) + w[r]

    if f > 0.0:
        add_piece(c - f, c, c - 1)
    add_piece(c, c + 1 - f, c)

    offsets = np.array(sorted(acc), dtype=np.int64)
    weights = np.array([acc[o] for o in sorted(acc)])
    return offsets, weights


# ---------------------------------------------------------------------------
# naive reference marchers
# ---------------------------------------------------------------------------

class _PairTable:
    """Flattened (receiver, source, delay) triples with increment weights."""

    def __init__(self, recv, src, delays, dt, p):
        self.recv = np.asarray(recv, dtype=np.int64)
        self.src = np.asarray(src, dtype=np.int64)
        rows_off, rows_w = [], []
        for d in delays:
            off, w = pair_increment_weights(float(d), dt, p)
            rows_off.append(off)
            rows_w.append(w)
        width = max(len(o) for o in rows_off)
        n = len(rows_off)
        # padding uses offset 0 with zero weight; harmless in every use below
        self.offsets = np.zeros((n, width), dtype=np.int64)
        self.weights = np.zeros((n, width))
        for i, (off, w) in enumerate(zip(rows_off, rows_w)):
            self.offsets[i, : off.size] = off
            self.weights[i, : w.size] = w
        self.implicit = np.where(self.offsets == 0, self.weights, 0.0).sum(axis=1)
        self.w_explicit = np.where(self.offsets == 0, 0.0, self.weights)

    def explicit_increment(self, sig, n_new):
        """sum of explicit weights times sigma at (n_new - offset), reading
        zero before t=0. sig is the (N+1, M) history array."""
        idx = n_new - self.offsets
        vals = np.where(idx >= 0, sig[np.clip(idx, 0, None), self.src[:, None]], 0.0)
        return (self.w_explicit * vals).sum(axis=1)


def _march(springs: SpringSet, table: _PairTable, data, dt: float,
           n_steps: int, p: int) -> np.ndarray:
    M = springs.M
    if callable(data):
        g = np.stack([np.atleast_1d(np.asarray(data(n * dt), dtype=float))
                      for n in range(n_steps + 1)])
    else:
        g = np.asarray(data, dtype=float)
    if g.shape != (n_steps + 1, M):
        raise ValueError(f"data shape {g.shape} != {(n_steps + 1, M)}")

    A = np.eye(M)
    np.add.at(A, (table.recv, table.src),
              0.5 * springs.beta[table.recv] * dt * table.implicit)
    lu, piv = lu_factor(A)
    if np.abs(np.diag(lu)).min() < 1e-14 * max(1.0, np.abs(A).max()):
        raise RuntimeError("implicit step system is numerically singular")

    sig = np.zeros((n_steps + 1, M))
    sig[0] = -g[0]
    run = np.zeros(table.recv.size)   # I_pair(t_n), updated in place
    half_beta = 0.5 * springs.beta
    for n in range(n_steps):
        inc_exp = table.explicit_increment(sig, n + 1)
        partial = run + dt * inc_exp
        rhs = -g[n + 1] - half_beta * np.bincount(table.recv, weights=partial,
                                                  minlength=M)
        new = lu_solve((lu, piv), rhs)
        if not np.all(np.isfinite(new)):
            raise RuntimeError(f"reference march produced non-finite densities "
                               f"at step {n + 1}")
        sig[n + 1] = new
        run = partial + dt * table.implicit * new[table.src]
    return sig


def reference_march_free(springs: SpringSet, data, dt: float, n_steps: int,
                         p: int = 6) -> np.ndarray:
    """Directly march the free-space Volterra system on a uniform grid.

    Each history integral is carried as a running sum; the one-step growth
    integrates the degree-(p-1) interpolant of the density exactly over the
    bisected slab. Cost O(M^2) setup-dependent pairs per step, which is fine
    at oracle scale (M up to a few tens).

    Parameters
    ----------
    data : callable t -> (M,) array, or precomputed (n_steps+1, M) array.
    p : interpolation node count (p = 1 gives the piecewise-constant scheme).

    Returns
    -------
    sig : (n_steps+1, M) array, sig[n] = densities at t = n dt.
    """
    recv, src = np.meshgrid(np.arange(springs.M), np.arange(springs.M),
                            indexing="ij")
    delays = np.abs(springs.x[recv] - springs.x[src])
    table = _PairTable(recv.ravel(), src.ravel(), delays.ravel(), dt, p)
    return _march(springs, table, data, dt, n_steps, p)


def reference_march_periodic(springs: SpringSet, data, dt: float, n_steps: int,
                             p: int = 6, image_count: int | None = None
                             ) -> np.ndarray:
    """As reference_march_free, with 2 pi images of every source included.

    Images are kept when their delay can fall inside (0, T]; image_count
    overrides the automatic causal range (a warning is issued if it is too
    small for the requested horizon).
    """
    T = n_steps * dt
    needed = _image_range(T)
    if image_count is None:
        image_count = needed
    elif image_count < needed:
        warnings.warn(
            f"image_count={image_count} may miss causal images for T={T:.3g} "
            f"(need {needed})", stacklevel=2)
    recv, src, delays = [], [], []
    for j in range(springs.M):
        for l in range(springs.M):
            for m in range(-image_count, image_count + 1):
                d = abs(springs.x[j] - springs.x[l] - TWO_PI * m)
                if d <= T:
                    recv.append(j)
                    src.append(l)
                    delays.append(d)
    table = _PairTable(recv, src, delays, dt, p)
    return _march(springs, table, data, dt, n_steps, p)


# ---------------------------------------------------------------------------
# field evaluation from a stored density history
# ---------------------------------------------------------------------------

def eval_scattered_field(sig: np.ndarray, dt: float, springs: SpringSet,
                         targets, t_steps=None, bc: str = "free", p: int = 6,
                         image_count: int | None = None) -> SpaceTimeField:
    """Evaluate u(x, t) = (1/2) sum_j int_0^{t-dist} sigma_j from a density
    time series, using the same interpolation and running sums as the
    reference marchers.

    Parameters
    ----------
    sig : (N+1, M) densities on the uniform grid t_n = n dt.
    targets : spatial evaluation points.
    t_steps : grid step indices at which to record the field
        (default: every step, 0..N).

    Returns a SpaceTimeField on (targets, selected times).
    """
    sig = np.asarray(sig, dtype=float)
    n_total = sig.shape[0] - 1
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if t_steps is None:
        t_steps = np.arange(n_total + 1)
    else:
        t_steps = np.asarray(t_steps, dtype=np.int64)
        if np.any(t_steps < 0) or np.any(t_steps > n_total):
            raise ValueError("requested output steps outside stored history")
    T = n_total * dt

    if bc == "free":
        shifts = [0.0]
    elif bc == "periodic":
        n_img = _image_range(T) if image_count is None else image_count
        shifts = [TWO_PI * m for m in range(-n_img, n_img + 1)]
    else:
        raise ValueError(f"unknown bc {bc!r}")

    recv, src, delays = [], [], []
    for q, xq in enumerate(targets):
        for l in range(springs.M):
            for sh in shifts:
                d = abs(xq - springs.x[l] - sh)
                if d <= T:
                    recv.append(q)
                    src.append(l)
                    delays.append(d)

    Q = targets.size
    u = np.zeros((t_steps.size, Q))
    out_pos = {int(step): i for i, step in enumerate(t_steps)}
    if not recv:
        return SpaceTimeField(x=targets, t=t_steps * dt, u=u)

    table = _PairTable(recv, src, delays, dt, p)
    run = np.zeros(table.recv.size)
    if 0 in out_pos:
        u[out_pos[0]] = 0.0
    for n in range(n_total):
        # all densities are known here, so the implicit slot is just another
        # explicit weight
        idx = (n + 1) - table.offsets
        vals = np.where(idx >= 0,
                        sig[np.clip(idx, 0, None), table.src[:, None]], 0.0)
        run = run + dt * (table.weights * vals).sum(axis=1)
        if (n + 1) in out_pos:
            u[out_pos[n + 1]] = 0.5 * np.bincount(table.recv, weights=run,
                                                  minlength=Q)
    return SpaceTimeField(x=targets, t=t_steps * dt, u=u)
