"""Nonuniform FFTs between scatterer locations and Fourier modes.

Two transforms are needed, an adjoint pair on modes k = -K..K:

    type 1 (points -> modes):  S_k = sum_j c_j e^{+i k x_j}
    type 2 (modes -> points):  u_j = sum_k c_k e^{-i k x_j}

Small problems (M*K <= 4096) go through the direct O(M*K) sums, which
double as the oracle for the gridded path.  Larger problems use standard
Kaiser-Bessel gridding onto a 2x-oversampled fine grid, an FFT, and
analytic deconvolution of the kernel transform.  Scatterer locations are
fixed for the lifetime of a simulation, so the spreading operator is
precomputed once as a sparse matrix (`NufftPlan`).
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.special import i0e

__all__ = ["nudft1_direct", "nudft2_direct", "nufft1", "nufft2", "NufftPlan"]

DIRECT_CUTOFF = 4096  # use direct sums when M*K is at most this


def nudft1_direct(x, c, K: int):
    """Direct type-1 sum S_k = sum_j c_j e^{ikx_j}, k = -K..K."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c)
    k = np.arange(-K, K + 1)
    return np.exp(1j * np.outer(k, x)) @ c


def nudft2_direct(x, c, K: int):
    """Direct type-2 sum u(x_j) = sum_{k=-K}^{K} c_k e^{-ikx_j}."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c)
    if c.shape[-1] != 2 * K + 1:
        raise ValueError(f"expected {2*K+1} mode coefficients, got {c.shape}")
    k = np.arange(-K, K + 1)
    return np.exp(-1j * np.outer(x, k)) @ c


def _kernel_halfwidth(eps: float) -> int:
    return int(math.ceil(math.log10(1.0 / eps))) + 2


def _kb_hat_gridunits(beta: float, a: float, xi):
    """FT (e^{-i xi u} convention) of the scaled KB kernel
    e^{-beta} I0(beta sqrt(1-(u/a)^2)) on |u| <= a, at frequencies xi.

    The same e^{-beta} scaling is used when spreading, so kernel and
    deconvolution factors stay O(1) for any beta.
    """
    xi = np.asarray(xi, dtype=float)
    z2 = beta * beta - (a * xi) ** 2
    z = np.sqrt(np.abs(z2))
    zs = np.maximum(z, 1e-300)
    body = np.where(z2 >= 0.0,
                    (np.exp(z - beta) - np.exp(-z - beta)) / (2.0 * zs),
                    math.exp(-beta) * np.sin(zs) / zs)
    body = np.where(z < 1e-8, math.exp(-beta) * (1.0 + z2 / 6.0), body)
    return 2.0 * a * body


class NufftPlan:
    """Reusable transform for a fixed point set and mode cutoff.

    Parameters
    ----------
    x : array (M,)
        Point locations (any reals; wrapped into the 2pi period).
    K : int
        Mode cutoff, modes -K..K.
    eps : float
        Accuracy target for the gridded path.
    """

    def __init__(self, x, K: int, eps: float = 1e-12):
        x = np.ascontiguousarray(x, dtype=float)
        if K < 0:
            raise ValueError("K must be nonnegative")
        if not (0.0 < eps < 1.0):
            raise ValueError(f"eps must lie in (0,1), got {eps}")
        self.x = x
        self.K = int(K)
        self.eps = float(eps)
        self.M = x.size
        self.nF = 2 * self.K + 1
        self.direct = self.M * self.K <= DIRECT_CUTOFF

        if self.direct:
            k = np.arange(-self.K, self.K + 1)
            self._E = np.exp(1j * np.outer(k, x))   # (nF, M)
            self._E2 = np.exp(-1j * np.outer(x, k))  # (M, nF)
            return

        hw = _kernel_halfwidth(eps)
        a = hw + 0.5
        # Kaiser-Bessel shape tuned for 2x oversampling (Beatty's rule)
        beta = math.pi * math.sqrt(((2 * hw + 1) / 2.0) ** 2 * 2.25 - 0.8)
        n = scipy.fft.next_fast_len(max(2 * self.nF, 4 * hw + 2), real=False)
        self.n = n
        self._mode_idx = np.arange(-self.K, self.K + 1) % n

        # spread matrix P[g, j] = psi(g - x_j/dy), wrapped; duplicates sum
        tau = (x % (2.0 * math.pi)) * (n / (2.0 * math.pi))
        i0 = np.round(tau).astype(np.int64)
        offs = np.arange(-hw, hw + 1)
        u = (i0[:, None] + offs) - tau[:, None]          # |u| <= a
        g = np.sqrt(np.maximum(1.0 - (u / a) ** 2, 0.0))
        vals = i0e(beta * g) * np.exp(beta * (g - 1.0))  # psi/psi(0) scale
        rows = (i0[:, None] + offs) % n
        cols = np.broadcast_to(np.arange(self.M)[:, None], rows.shape)
        P = sp.csr_matrix(
            (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, self.M))
        self._P = P
        self._PT = P.T.tocsr()

        xi = 2.0 * math.pi * np.arange(-self.K, self.K + 1) / n
        self._deconv = 1.0 / _kb_hat_gridunits(beta, a, xi)

    def type1(self, c):
        """S_k = sum_j c_j e^{ikx_j} for k = -K..K."""
        c = np.asarray(c)
        if self.direct:
            return self._E @ c
        tau = self._P @ c.astype(complex)
        T = self.n * scipy.fft.ifft(tau)
        return T[self._mode_idx] * self._deconv

    def type2(self, c):
        """u(x_j) = sum_k c_k e^{-ikx_j} for the plan's points."""
        c = np.asarray(c)
        if c.shape[-1] != self.nF:
            raise ValueError(f"expected {self.nF} coefficients, got {c.shape}")
        if self.direct:
            return self._E2 @ c
        d = np.zeros(self.n, dtype=complex)
        d[self._mode_idx] = c * self._deconv
        F = scipy.fft.fft(d)
        return self._PT @ F


def nufft1(x, c, K: int, eps: float = 1e-12):
    """Type-1 transform; routes to the direct sum for small problems."""
    return NufftPlan(x, K, eps).type1(c)


def nufft2(x, c, eps: float = 1e-12):
    """Type-2 transform; mode count inferred from len(c) = 2K+1."""
    c = np.asarray(c)
    if c.shape[-1] % 2 != 1:
        raise ValueError("mode vector must have odd length 2K+1")
    K = (c.shape[-1] - 1) // 2
    return NufftPlan(x, K, eps).type2(c)
