"""Gauss-Legendre rules and barycentric Lagrange interpolation helpers.

The local-in-time integrals are done with mapped Gauss-Legendre rules;
density values at quadrature nodes come from barycentric interpolation
on a short stencil of recent time-grid values.  Stencils are the p
nearest available grid points, ties at exact midpoints resolved toward
the more recent point, and clamped at the ends of the available range.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "gauss_legendre",
    "gauss_legendre_on",
    "uniform_bary_weights",
    "bary_weights",
    "stencil_start",
    "interp_weights",
]


@lru_cache(maxsize=None)
def _leggauss_cached(n: int):
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int):
    """n-point Gauss-Legendre nodes and weights on [-1, 1] (cached,
    read-only arrays)."""
    if n < 1:
        raise ValueError(f"need n >= 1 nodes, got {n}")
    return _leggauss_cached(n)


def gauss_legendre_on(a: float, b: float, n: int):
    """n-point Gauss-Legendre rule mapped to [a, b]."""
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=None)
def uniform_bary_weights(p: int):
    """Barycentric weights for p equispaced nodes: (-1)^r C(p-1, r)."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    r = np.arange(p)
    from math import comb
    lam = np.array([(-1.0) ** j * comb(p - 1, j) for j in r])
    lam.setflags(write=False)
    return lam


def bary_weights(nodes):
    """Barycentric weights for arbitrary distinct nodes (O(p^2))."""
    x = np.asarray(nodes, dtype=float)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    w = 1.0 / d.prod(axis=1)
    return w


def stencil_start(theta, m_min: int, m_max: int, p: int):
    """First index of the p-point stencil of integer grid points nearest
    to theta, restricted to [m_min, m_max].

    theta is measured in grid units on the same axis as the m indices.
    At exact midpoints (theta integral) the stencil leans toward smaller
    m, i.e. the more recent side of the history grid.
    """
    if m_max - m_min + 1 < p:
        raise ValueError(f"stencil of {p} points does not fit in "
                         f"[{m_min}, {m_max}]")
    theta = np.asarray(theta)
    raw = np.ceil(theta).astype(np.int64) - p // 2
    return np.clip(raw, m_min, m_max - p + 1)


def interp_weights(theta, m0, p: int):
    """Barycentric Lagrange weights at evaluation points theta for values
    on the integer stencil m0..m0+p-1.

    Parameters
    ----------
    theta : array (...,)
        Evaluation points in grid units.
    m0 : array (...,), integer
        Stencil start indices (same shape as theta).
    p : int
        Stencil size.

    Returns
    -------
    array (..., p)
        Weights v with sum(v) = 1; exact-hit points return an indicator
        row.  Reproduces polynomials of degree p-1 exactly.
    """
    theta = np.asarray(theta, dtype=float)
    m0 = np.asarray(m0)
    lam = uniform_bary_weights(p)
    d = theta[..., None] - (m0[..., None] + np.arange(p))
    hit = d == 0.0
    on_node = hit.any(axis=-1)
    ratio = lam / np.where(hit, 1.0, d)
    v = ratio / ratio.sum(axis=-1, keepdims=True)
    v = np.where(on_node[..., None], hit.astype(float), v)
    return v
