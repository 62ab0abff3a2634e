"""Blending window and its influence kernels.

The history/local split rests on one smooth ramp phi: [0, delta] -> [0, 1]
whose derivative is a Kaiser-Bessel bump,

    phi'(t) = b/(delta sinh b) * I0(b sqrt(1 - (2t/delta - 1)^2)),

with shape parameter b = ln(1/eps).  phi' integrates to exactly 1 and its
Fourier transform has closed form, which is what makes the windowed
history representable by ~K Fourier modes with eps-level truncation.

Conventions: Fourier transforms here are f^(w) = int f(t) e^{-iwt} dt.
Second derivatives are classical one-sided values on [0, delta] and zero
outside; the endpoint jumps of phi' are O(eps) and ignored analytically.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import i0e, i1e

__all__ = ["Window"]


def _sinc_sqrt(z2):
    """sinc(sqrt(z2)) for z2 >= 0 (series near 0)."""
    z2 = np.asarray(z2, dtype=float)
    z = np.sqrt(z2)
    return np.where(z < 1e-8, 1.0 - z2 / 6.0,
                    np.sin(z) / np.where(z == 0.0, 1.0, z))


class Window:
    """Kaiser-Bessel blending window on [0, delta].

    Parameters
    ----------
    delta : float
        Ramp length (window width in time units).
    b : float
        Shape parameter, ln(1/eps).

    Notes
    -----
    ``phi`` is served from a dense cubic spline whose anchor values come
    from a Chebyshev antiderivative of ``phi_prime`` (the integrand is
    entire, so the series converges superexponentially).  The spline is
    accurate to ~1e-14 and cheap enough for the bulk weight precompute.
    """

    def __init__(self, delta: float, b: float, n_spline: int = 8192):
        if delta <= 0.0:
            raise ValueError(f"delta must be positive, got {delta}")
        if b <= 0.0:
            raise ValueError(f"b must be positive, got {b}")
        self.delta = float(delta)
        self.b = float(b)

        deg = max(96, int(3.5 * b))
        cheb = np.polynomial.chebyshev.Chebyshev.interpolate(
            lambda t: self.phi_prime(t), deg, domain=[0.0, self.delta])
        self._phi_cheb = cheb.integ(lbnd=0.0)

        xs = np.linspace(0.0, self.delta, n_spline + 1)
        ys = self._phi_cheb(xs)
        self._phi_spline = CubicSpline(
            xs, ys,
            bc_type=((1, float(self.phi_prime(0.0))),
                     (1, float(self.phi_prime(self.delta)))))

    @classmethod
    def from_config(cls, cfg) -> "Window":
        return cls(cfg.delta, cfg.b)

    # -- pointwise window values ------------------------------------------

    def phi_prime(self, t):
        """Window derivative (the Kaiser-Bessel bump); 0 outside [0, delta]."""
        t = np.asarray(t, dtype=float)
        s = 2.0 * t / self.delta - 1.0
        g = np.sqrt(np.maximum(1.0 - s * s, 0.0))
        # I0(b g)/sinh(b) evaluated as i0e(bg) e^{b(g-1)} * 2/(1-e^{-2b}),
        # stable for any b
        val = (self.b / self.delta) * i0e(self.b * g) \
            * np.exp(self.b * (g - 1.0)) * 2.0 / (1.0 - np.exp(-2.0 * self.b))
        val = np.where((t >= 0.0) & (t <= self.delta), val, 0.0)
        return val if val.ndim else float(val)

    def phi_dprime(self, t):
        """Classical second derivative of phi on [0, delta], 0 outside.

        One-sided limits at the endpoints: +-A b^2/delta with
        A = b/(delta sinh b).
        """
        t = np.asarray(t, dtype=float)
        s = 2.0 * t / self.delta - 1.0
        g = np.sqrt(np.maximum(1.0 - s * s, 0.0))
        A = (self.b / self.delta) * 2.0 / (1.0 - np.exp(-2.0 * self.b))
        scale = A * np.exp(self.b * (g - 1.0)) * self.b
        gp = -(2.0 / self.delta) * s / np.maximum(g, 1e-300)
        val = scale * i1e(self.b * g) * gp
        # g -> 0: I1(bg)/g -> b/2, so the product tends to -A e^{-b}... b^2 s/delta
        lim = scale * (-(self.b / self.delta) * s)  # uses I1(z) ~ z/2
        out = np.where(g > 1e-6, val, lim)
        out = np.where((t >= 0.0) & (t <= self.delta), out, 0.0)
        return out if out.ndim else float(out)

    def phi(self, t):
        """Cumulative blend: 0 for t <= 0, 1 for t >= delta, smooth ramp
        in between."""
        t = np.asarray(t, dtype=float)
        v = self._phi_spline(np.clip(t, 0.0, self.delta))
        v = np.where(t <= 0.0, 0.0, np.where(t >= self.delta, 1.0, v))
        return v if v.ndim else float(v)

    # -- Fourier side ------------------------------------------------------

    def hat_phi_prime(self, omega):
        """Fourier transform of phi' (e^{-iwt} convention):

            b e^{-i delta w/2} / sinh(b) * sinc sqrt((delta w/2)^2 - b^2)
        """
        omega = np.asarray(omega, dtype=float)
        z2 = (self.delta * omega / 2.0) ** 2 - self.b * self.b
        s = np.sqrt(np.abs(z2))
        # b sinc(sqrt(z2))/sinh(b); for z2 < 0 fold e^{-b} into sinh ratio
        osc = self.b * _sinc_sqrt(np.maximum(z2, 0.0)) / np.sinh(self.b)
        grow = self.b * (np.exp(s - self.b) - np.exp(-s - self.b)) \
            / (1.0 - np.exp(-2.0 * self.b)) / np.where(s < 1e-8, 1.0, s)
        grow = np.where(s < 1e-8, self.b * 2.0 * np.exp(-self.b)
                        / (1.0 - np.exp(-2.0 * self.b)), grow)
        mag = np.where(z2 >= 0.0, osc, grow)
        out = np.exp(-0.5j * self.delta * omega) * mag
        return out if out.ndim else complex(out)

    def influence_kernel(self, k, tau):
        """Mode-k driving kernel 2cos(k tau) phi'(tau) + sin(k tau)/k phi''(tau)
        (k = 0 via the limit sin(k tau)/k -> tau); support [0, delta]."""
        tau = np.asarray(tau, dtype=float)
        if k == 0:
            return 2.0 * self.phi_prime(tau) + tau * self.phi_dprime(tau)
        return 2.0 * np.cos(k * tau) * self.phi_prime(tau) \
            + np.sin(k * tau) / k * self.phi_dprime(tau)

    def hat_influence_kernel(self, k, omega):
        """Fourier transform of the mode-k kernel as shifted copies of
        hat_phi_prime:

            (1/2 - w/2k) phi'^(w + k) + (1/2 + w/2k) phi'^(w - k)

        (requires k != 0).  Both shifts sit at distance ~|k| from the
        origin, which is what drives the spectral tail bound.
        """
        if k == 0:
            raise ValueError("hat_influence_kernel needs k != 0")
        omega = np.asarray(omega, dtype=float)
        r = omega / (2.0 * k)
        out = (0.5 - r) * self.hat_phi_prime(omega + k) \
            + (0.5 + r) * self.hat_phi_prime(omega - k)
        return out if out.ndim else complex(out)
