"""Post-processing: error norms, convergence slopes, tapered spectra,
and the homogenized cutoff frequency for dense random media."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from .fields import SpaceTimeField, Spectrum
from .window import Window

__all__ = ["max_grid_error", "estimate_order", "windowed_spectrum",
           "refine_peak", "klein_gordon_cutoff"]


def max_grid_error(a: SpaceTimeField, b: SpaceTimeField) -> float:
    """Max pointwise |a - b| over a shared space-time sample grid."""
    if not a.same_grid(b):
        raise ValueError("fields sampled on different grids")
    return float(np.abs(a.u - b.u).max())


def estimate_order(errors, dts, floor: float = 1e-12) -> float:
    """Least-squares slope of log(error) against log(dt).

    Points within 10x of the floor are excluded (they sit on the window
    tolerance plateau, not the power law); at least 3 usable points are
    required.
    """
    errors = np.asarray(errors, dtype=float)
    dts = np.asarray(dts, dtype=float)
    if errors.shape != dts.shape or errors.ndim != 1:
        raise ValueError("errors and dts must be 1-d with equal length")
    keep = errors > 10.0 * floor
    if keep.sum() < 3:
        raise ValueError(f"only {int(keep.sum())} points above the floor; "
                         "need at least 3 for a slope")
    return float(np.polyfit(np.log(dts[keep]), np.log(errors[keep]), 1)[0])


def _tapered(u, dt: float, taper_frac: float, eps: float,
             window: Window | None) -> np.ndarray:
    """The series with smooth roll-on/roll-off applied at both record ends."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size < 4:
        raise ValueError("need a 1-d series with at least 4 samples")
    n = u.size
    if window is None:
        if not 0.0 < taper_frac < 0.5:
            raise ValueError("taper_frac must lie in (0, 0.5)")
        window = Window(delta=taper_frac * n * dt, b=math.log(1.0 / eps))
    t = np.arange(n) * dt
    return u * window.phi(t) * window.phi((n - 1) * dt - t)


def windowed_spectrum(u, dt: float, taper_frac: float = 0.1,
                      eps: float = 1e-12,
                      window: Window | None = None) -> Spectrum:
    """One-sided magnitude spectrum of a real time series, with smooth
    roll-on/roll-off tapers at the record ends.

    The taper reuses the time-window ramp: multiply by phi(t) over the
    first taper_frac of the record and by phi(T - t) over the last.
    A caller-supplied Window overrides the taper shape and width.
    Frequencies are omega_m = 2 pi m / (N dt); magnitudes carry the dt
    factor so they approximate |integral u e^{-i omega t} dt|.
    """
    tapered = _tapered(u, dt, taper_frac, eps, window)
    n = tapered.size
    uhat = np.fft.rfft(tapered)
    m = np.arange(uhat.size)
    return Spectrum(omega=2.0 * np.pi * m / (n * dt),
                    magnitude=dt * np.abs(uhat))


def refine_peak(u, dt: float, omega0: float, half_width: float | None = None,
                taper_frac: float = 0.1, eps: float = 1e-12,
                window: Window | None = None) -> tuple[float, float]:
    """Continuous-frequency polish of a spectrum peak near omega0.

    The FFT grid quantizes peak locations to 2 pi / (N dt); narrow
    resonances need better. This maximizes the magnitude of the tapered
    transform evaluated at arbitrary omega within +-half_width (default
    one grid bin) of omega0. Returns (omega_peak, magnitude).
    """
    tapered = _tapered(u, dt, taper_frac, eps, window)
    n = tapered.size
    t = np.arange(n) * dt
    if half_width is None:
        half_width = 2.0 * np.pi / (n * dt)

    def neg_mag(om):
        return -np.abs(np.sum(tapered * np.exp(-1j * om * t)))

    res = minimize_scalar(neg_mag, bounds=(omega0 - half_width,
                                           omega0 + half_width),
                          method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(-res.fun * dt)


def klein_gordon_cutoff(mean_beta: float, mean_spacing: float) -> float:
    """Cutoff frequency sqrt(mean_beta / mean_spacing) of the effective
    dispersive medium seen by waves in a dense field of weak springs;
    propagation below it is exponentially damped."""
    if not (mean_beta > 0 and mean_spacing > 0):
        raise ValueError("mean_beta and mean_spacing must be positive")
    return math.sqrt(mean_beta / mean_spacing)
