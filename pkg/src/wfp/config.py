"""Parameter derivation and validation.

All solver parameters flow from four user choices: the accuracy target
``eps``, the spectral reserve fraction ``gamma``, the time step ``dt``
and the interpolation order ``p``.  Everything else (window width,
history depth, mode cutoff, quadrature sizes) is derived here so the
rest of the code never re-derives a constant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "WfpConfig",
    "derive_params",
    "suggest_dt",
    "gaussian_bandlimit",
    "load_config",
    "validate_geometry",
]

# guard for float noise in pi/dt when dt divides pi exactly
_CEIL_GUARD = 1e-9


@dataclass(frozen=True)
class WfpConfig:
    """Derived solver parameters.

    Attributes
    ----------
    eps : float
        Accuracy target; also sets the window shape parameter ``b``.
    gamma : float
        Fraction of the spectral band reserved for the window roll-off.
    dt : float
        Time step (the spatial grid used by the far-field projection has
        the same spacing, wave speed being 1).
    p : int
        Interpolation order of the density history (even, 2..16).
    bc : str
        ``"periodic"`` or ``"free"`` (free space emulated by periodic
        far-field roll-off).
    b : float
        Window shape parameter, ln(1/eps).
    W : int
        Window width in steps; the blend ramps over ``delta = W*dt``.
    delta : float
        Window width in time units.
    K : int
        Fourier cutoff; modes k = -K..K are carried.
    nF : int
        Number of Fourier modes, 2K+1.
    mMax : int
        Depth of the density ring buffer, W + p/2.
    nL : int
        Gauss-Legendre nodes per local-in-time integral.
    nG : int
        Gauss-Legendre nodes for the one-step kernel integrals.
    dtProjSteps : int
        Far-field roll-off cadence in steps (free-space mode only).
    """

    eps: float
    gamma: float
    dt: float
    p: int
    bc: str
    b: float
    W: int
    delta: float
    K: int
    nF: int
    mMax: int
    nL: int
    nG: int
    dtProjSteps: int

    def to_dict(self) -> dict:
        return asdict(self)


def derive_params(dt: float, eps: float = 1e-12, gamma: float = 0.5,
                  p: int = 6, bc: str = "periodic", nG: int = 16) -> WfpConfig:
    """Derive all solver parameters from the user-facing knobs.

    Parameters
    ----------
    dt : float
        Time step.
    eps : float
        Accuracy target in (0, 1).
    gamma : float
        Spectral reserve fraction in (0, 1).
    p : int
        Even interpolation order in [2, 16].
    bc : str
        Boundary mode, "periodic" or "free".
    nG : int
        Nodes of the one-step kernel quadrature (>= 4).

    Returns
    -------
    WfpConfig

    Raises
    ------
    ValueError
        If any parameter is out of range or the window does not fit the
        period (delta >= pi; for free space delta >= pi/3 leaves no room
        for the scatterer region).
    """
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0,1), got {eps}")
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0,1), got {gamma}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if p % 2 != 0 or not (2 <= p <= 16):
        raise ValueError(f"p must be even and in [2,16], got {p}")
    if bc not in ("periodic", "free"):
        raise ValueError(f"bc must be 'periodic' or 'free', got {bc!r}")
    if nG < 4:
        raise ValueError(f"nG must be >= 4, got {nG}")

    b = math.log(1.0 / eps)
    W = max(1, round(2.0 * b / (math.pi * gamma)))
    delta = W * dt
    if delta >= math.pi:
        raise ValueError(
            f"window width delta = W*dt = {delta:.6g} must be < pi; "
            f"decrease dt or loosen eps")
    if bc == "free" and 3.0 * delta >= math.pi:
        raise ValueError(
            f"free-space mode needs 3*delta < pi (delta = {delta:.6g})")

    K = int(math.ceil(math.pi / dt - _CEIL_GUARD))
    nF = 2 * K + 1
    mMax = W + p // 2
    nL = W
    dtProjSteps = int(1.5 * W)

    # The window's eps-bandlimit 2b/delta must fit the reserved band
    # gamma*K; integer rounding of W is absorbed by a (1+1/W) slack.
    if 2.0 * b / delta > gamma * K * (1.0 + 1.0 / W) * (1.0 + 1e-12):
        raise ValueError(
            "window bandlimit exceeds the reserved spectral band; "
            f"2b/delta = {2*b/delta:.6g} > gamma*K*(1+1/W) = "
            f"{gamma*K*(1+1/W):.6g}")

    return WfpConfig(eps=eps, gamma=gamma, dt=dt, p=p, bc=bc, b=b, W=W,
                     delta=delta, K=K, nF=nF, mMax=mMax, nL=nL, nG=nG,
                     dtProjSteps=dtProjSteps)


def suggest_dt(K0: float, gamma: float = 0.5) -> float:
    """Time step for data of spectral bandlimit K0.

    The cutoff is padded so the fraction ``gamma`` of the band is left
    for the window roll-off: K = ceil(K0/(1-gamma)), dt = pi/K.
    """
    if K0 <= 0:
        raise ValueError(f"K0 must be positive, got {K0}")
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0,1), got {gamma}")
    K = math.ceil(K0 / (1.0 - gamma) - _CEIL_GUARD)
    return math.pi / K


def gaussian_bandlimit(mu: float, eps: float = 1e-12) -> float:
    """eps-bandlimit of exp(-mu t^2): smallest K0 with |f^(w)| <= eps
    outside |w| <= K0, i.e. K0 = 2 sqrt(mu ln(1/eps))."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return 2.0 * math.sqrt(mu * math.log(1.0 / eps))


def load_config(path) -> WfpConfig:
    """Read a JSON config file.

    Recognized keys: dt (required), eps, gamma, p, bc, nG.  Unknown keys
    are rejected so typos fail loudly.
    """
    with open(path) as f:
        raw = json.load(f)
    if "dt" not in raw:
        raise ValueError(f"config {path} missing required key 'dt'")
    allowed = {"dt", "eps", "gamma", "p", "bc", "nG"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"config {path} has unknown keys {sorted(unknown)}")
    return derive_params(**raw)


def validate_geometry(positions, cfg: WfpConfig) -> None:
    """Check scatterer positions against the boundary mode.

    Periodic runs need positions inside [-pi, pi).  Free-space runs
    additionally need them at least 3*delta from the seam, so the local
    window of every scatterer stays clear of the roll-off region.
    """
    x = np.asarray(positions, dtype=float)
    if x.size and (x.min() < -math.pi or x.max() >= math.pi):
        raise ValueError("scatterer positions must lie in [-pi, pi)")
    if cfg.bc == "free":
        lim = math.pi - 3.0 * cfg.delta
        if x.size and (x.min() < -lim or x.max() > lim):
            raise ValueError(
                f"free-space scatterers must lie in [{-lim:.6g}, {lim:.6g}] "
                f"(3*delta = {3*cfg.delta:.6g} clearance from the seam)")
