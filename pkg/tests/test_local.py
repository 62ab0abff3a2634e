"""Neighbor classification, per-distance weights, and sparse local operators."""

import numpy as np
import pytest
from scipy.integrate import quad

from wfp.local import (
    LocalOperators,
    TargetOperator,
    WeightTable,
    classify_neighbors,
    eval_local_at_targets,
    local_weights,
    periodic_dist,
)
from wfp.potential import SpringSet
from wfp.window import Window

B12 = np.log(1e12)


def test_periodic_dist_wraps():
    assert periodic_dist(3.0, -3.0) == pytest.approx(2 * np.pi - 6.0)
    assert periodic_dist(-3.0, 3.0) == pytest.approx(2 * np.pi - 6.0)
    assert periodic_dist(0.5, 0.5) == 0.0
    x = np.linspace(-np.pi, np.pi, 50, endpoint=False)
    assert np.all(periodic_dist(x, 1.234) <= np.pi)


def test_classify_neighbors_matches_brute_force():
    rng = np.random.default_rng(3)
    M = 60
    springs = SpringSet(x=rng.uniform(-np.pi, np.pi, M),
                        beta=rng.uniform(0.5, 2.0, M))
    targets = rng.uniform(-np.pi, np.pi, 25)
    dt, delta = 0.05, 0.8
    table = classify_neighbors(springs, targets, dt, delta)
    assert table.n_targets == 25
    total = 0
    for q, xq in enumerate(targets):
        d_all = periodic_dist(xq, springs.x)
        want = set(np.nonzero(d_all < delta)[0])
        sl = slice(table.indptr[q], table.indptr[q + 1])
        got = set(table.idx[sl].tolist())
        assert got == want
        assert np.allclose(np.sort(table.dist[sl]),
                           np.sort(d_all[d_all < delta]), atol=1e-15)
        sets = table.sets(q)
        assert set(sets.nearby) == set(np.nonzero(d_all < dt)[0])
        assert set(sets.nearby) | set(sets.intermediate) == want
        total += len(want)
    assert table.mean_count == pytest.approx(total / 25)


@pytest.fixture(scope="module")
def setup_weights():
    dt, W, p = 0.02, 35, 6
    win = Window(delta=W * dt, b=B12)
    m_max = W + p // 2
    return win, dt, W, p, m_max


def test_weight_rows_integrate_polynomials(setup_weights):
    win, dt, W, p, m_max = setup_weights
    wt = WeightTable(win, dt, W, p, m_max)
    ds = np.array([0.0, 0.3 * dt, 2.7 * dt, 0.44, win.delta - dt / 3])
    rows = wt.rows(ds)
    coeffs = np.array([0.4, -1.0, 2.0, 0.7, -0.3, 1.1])[:p]  # degree p-1 in tau
    samples = np.polyval(coeffs, np.arange(m_max + 1) * dt)
    for d, row in zip(ds, rows):
        ref, _ = quad(lambda tau: (1.0 - win.phi(tau)) * np.polyval(coeffs, tau),
                      d, win.delta, limit=200, epsabs=1e-13, epsrel=1e-12)
        assert abs(row @ samples - ref) < 1e-9


def test_weight_rows_integrate_gaussian(setup_weights):
    win, dt, W, p, m_max = setup_weights
    wt = WeightTable(win, dt, W, p, m_max)
    mu, c = 15.0, 0.31

    def dens(tau):
        return np.exp(-mu * (tau - c) ** 2)

    samples = dens(np.arange(m_max + 1) * dt)
    for d in [0.0, 0.11, 0.37]:
        ref, _ = quad(lambda tau: (1.0 - win.phi(tau)) * dens(tau),
                      d, win.delta, limit=200, epsabs=1e-13)
        row = wt.rows(np.array([d]))[0]
        assert abs(row @ samples - ref) < 1e-8


def test_only_subgrid_distances_touch_the_unknown_slot(setup_weights):
    win, dt, W, p, m_max = setup_weights
    wt = WeightTable(win, dt, W, p, m_max)
    ds = np.array([0.0, 0.5 * dt, 0.999 * dt, dt, 2.3 * dt, 17.0 * dt])
    rows = wt.rows(ds)
    assert np.all(rows[:3, 0] != 0.0)
    assert np.all(rows[3:, 0] == 0.0)


def test_local_weights_single_matches_table(setup_weights):
    win, dt, W, p, m_max = setup_weights
    wt = WeightTable(win, dt, W, p, m_max)
    d = 0.123
    assert np.allclose(local_weights(d, win, dt, W, p, m_max),
                       wt.rows(np.array([d]))[0], atol=0)


def test_weight_table_rejects_narrow_memory(setup_weights):
    win, dt, W, p, _ = setup_weights
    with pytest.raises(ValueError):
        WeightTable(win, dt, W, p, m_max=p - 2)


def test_local_operators_match_explicit_loop(setup_weights):
    win, dt, W, p, m_max = setup_weights
    rng = np.random.default_rng(11)
    M = 18
    springs = SpringSet(x=rng.uniform(-1.0, 1.0, M),
                        beta=rng.uniform(0.5, 3.0, M))
    ops = LocalOperators(springs, win, dt, W, p, m_max)
    assert np.all(np.diff(ops.x) > 0)
    assert np.array_equal(springs.x[ops.perm], ops.x)

    # dense rebuild of S and the stack operator from single-distance rows
    S_ref = np.zeros((M, M))
    C_ref = np.zeros((M, m_max, M))
    for j in range(M):
        for l in range(M):
            d = periodic_dist(ops.x[j], ops.x[l])
            if d >= win.delta:
                continue
            row = local_weights(float(d), win, dt, W, p, m_max)
            if d < dt:
                S_ref[j, l] = 0.5 * ops.beta[j] * row[0]
            C_ref[j, :, l] = 0.5 * ops.beta[j] * row[1:]
    assert np.max(np.abs(ops.S.toarray() - S_ref)) < 1e-14

    stack = rng.standard_normal((m_max, M))
    got = ops.explicit_memory(stack.ravel())
    want = np.einsum("jml,ml->j", C_ref, stack)
    assert np.max(np.abs(got - want)) < 1e-12

    rhs = rng.standard_normal(M)
    x = ops.solve(rhs)
    assert np.max(np.abs((np.eye(M) + S_ref) @ x - rhs)) < 1e-12


def test_target_operator_matches_oneoff_eval(setup_weights):
    win, dt, W, p, m_max = setup_weights
    rng = np.random.default_rng(23)
    M = 12
    springs = SpringSet(x=rng.uniform(-1.2, 1.2, M),
                        beta=rng.uniform(0.5, 3.0, M))
    ops = LocalOperators(springs, win, dt, W, p, m_max)
    targets = np.array([-1.3, -0.2, 0.9, 3.0])  # last one has no neighbors
    top = TargetOperator(targets, ops, win)

    stack_own = rng.standard_normal((m_max + 1, M))
    stack_sorted = stack_own[:, ops.perm]
    got = top.eval(stack_sorted.ravel())
    want = eval_local_at_targets(targets, stack_own, springs, win, dt, W, p,
                                 m_max)
    assert np.max(np.abs(got - want)) < 1e-12
    assert got[-1] == 0.0

    with pytest.raises(ValueError):
        eval_local_at_targets(targets, stack_own[:-1], springs, win, dt, W,
                              p, m_max)


def test_passive_springs_make_identity_system(setup_weights):
    win, dt, W, p, m_max = setup_weights
    springs = SpringSet(x=np.array([-0.3, 0.2]), beta=np.array([0.0, 0.0]))
    ops = LocalOperators(springs, win, dt, W, p, m_max)
    rhs = np.array([1.0, -2.0])
    assert np.array_equal(ops.solve(rhs), rhs)
    assert ops.S.nnz == 0
