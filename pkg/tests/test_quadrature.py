"""Quadrature rules and barycentric interpolation against closed forms."""

import numpy as np
import pytest

from wfp.quadrature import (bary_weights, gauss_legendre, gauss_legendre_on,
                            interp_weights, stencil_start,
                            uniform_bary_weights)


def test_gauss_legendre_exact_through_degree_2n_minus_1():
    for n in (1, 2, 5, 16):
        x, w = gauss_legendre(n)
        for d in range(2 * n):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            assert abs(w @ x ** d - exact) < 1e-13


def test_gauss_legendre_rejects_empty_rule():
    with pytest.raises(ValueError):
        gauss_legendre(0)


def test_gauss_legendre_cache_returns_readonly_arrays():
    x, w = gauss_legendre(7)
    with pytest.raises(ValueError):
        x[0] = 0.0
    with pytest.raises(ValueError):
        w[0] = 0.0


def test_mapped_rule_matches_analytic_integral():
    x, w = gauss_legendre_on(1.0, 3.0, 20)
    assert abs(w @ np.exp(x) - (np.e ** 3 - np.e)) < 1e-12
    # degenerate interval integrates to zero
    x0, w0 = gauss_legendre_on(2.0, 2.0, 5)
    assert abs(w0.sum()) == 0.0


def test_uniform_bary_weights_match_generic_formula():
    # on equispaced nodes the generic O(p^2) weights are proportional to
    # the binomial pattern; both give identical interpolants
    for p in (2, 3, 6, 9):
        lam = uniform_bary_weights(p)
        gen = bary_weights(np.arange(p, dtype=float))
        ratio = gen / lam
        assert np.allclose(ratio, ratio[0], rtol=1e-12)


def test_uniform_bary_weights_rejects_nonpositive_p():
    with pytest.raises(ValueError):
        uniform_bary_weights(0)


@pytest.mark.parametrize("p", [2, 4, 6, 8])
def test_interp_weights_reproduce_polynomials(p):
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(p)   # degree p-1
    m0 = np.array([4, 9, 0])
    theta = m0 + np.array([0.37, 0.99, 0.5]) * (p - 1)
    v = interp_weights(theta, m0, p)
    nodes = m0[:, None] + np.arange(p)
    vals = np.polyval(coeffs, nodes)
    got = (v * vals).sum(axis=-1)
    want = np.polyval(coeffs, theta)
    assert np.allclose(got, want, rtol=1e-11, atol=1e-11)


def test_interp_weights_exact_hit_is_indicator():
    v = interp_weights(np.array([6.0]), np.array([4]), 6)[0]
    want = np.zeros(6)
    want[2] = 1.0
    assert np.array_equal(v, want)


def test_interp_weights_sum_to_one():
    v = interp_weights(np.linspace(2.1, 7.7, 13), np.full(13, 2), 6)
    assert np.allclose(v.sum(axis=-1), 1.0, atol=1e-12)


def test_stencil_start_centers_and_clamps():
    # theta = 5.3 with p = 4: nearest points {4, 5, 6, 7} -> start 4
    assert stencil_start(5.3, 0, 20, 4) == 4
    # exact midpoint leans toward the smaller (more recent) side
    assert stencil_start(5.0, 0, 20, 2) == 4
    # clamping at both ends of the admissible range
    assert stencil_start(0.2, 0, 20, 4) == 0
    assert stencil_start(19.9, 0, 20, 4) == 17
    assert np.array_equal(stencil_start(np.array([0.2, 19.9]), 0, 20, 4),
                          [0, 17])


def test_stencil_start_rejects_too_small_range():
    with pytest.raises(ValueError):
        stencil_start(1.0, 0, 2, 4)
