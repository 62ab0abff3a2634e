"""Recent-time half of the field split: neighbor classification, per-distance
quadrature weights, and the sparse spring-equation operators.

The recent contribution of source l to a point x at time t_{n+1} is

    int_d^delta (1 - phi(tau)) sigma_l(t_{n+1} - tau) dtau,    d = dist(x, x_l),

computed by replacing sigma_l with its degree-(p-1) interpolant on the
uniform grid. That yields per-distance weight rows Q_m(d), m = 0..m_max:
slot m multiplies sigma_l^{n+1-m}. Slot 0 (only populated when d < dt)
couples to the unknown newest density and forms the implicit matrix S;
slots m >= 1 form the explicit stack operators C^(m), stored concatenated
as one wide sparse matrix so the whole memory term is a single matvec.

Weight rows scale: spring-equation entries carry (beta_j/2); field
evaluation at targets carries 1/2 (the layer-potential prefactor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import splu

from .quadrature import gauss_legendre, interp_weights, stencil_start
from .window import Window

TWO_PI = 2.0 * np.pi


def periodic_dist(x, xj):
    """Distance from x to the nearest 2 pi image of xj (broadcasts)."""
    x = np.asarray(x, dtype=float)
    xj = np.asarray(xj, dtype=float)
    d = np.mod(x - xj + np.pi, TWO_PI) - np.pi
    return np.abs(d)


# ---------------------------------------------------------------------------
# neighbor classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeighborSets:
    """Index sets around one target: nearby (dist < dt) and intermediate
    (dt <= dist < delta)."""

    nearby: np.ndarray
    intermediate: np.ndarray


class NeighborTable:
    """Flat CSR-style neighbor lists for a batch of targets.

    idx[indptr[q]:indptr[q+1]] are the spring indices with periodic
    distance < delta from target q, and dist the matching distances.
    """

    def __init__(self, indptr, idx, dist, r_near):
        self.indptr = indptr
        self.idx = idx
        self.dist = dist
        self.r_near = r_near

    @property
    def n_targets(self) -> int:
        return self.indptr.size - 1

    @property
    def mean_count(self) -> float:
        return self.idx.size / max(self.n_targets, 1)

    def sets(self, q: int) -> NeighborSets:
        sl = slice(self.indptr[q], self.indptr[q + 1])
        near = self.dist[sl] < self.r_near
        return NeighborSets(nearby=self.idx[sl][near],
                            intermediate=self.idx[sl][~near])


def _classify_sorted(xs: np.ndarray, targets: np.ndarray, r_near: float,
                     r_far: float) -> NeighborTable:
    """Neighbor table against positions xs (sorted, in [-pi, pi))."""
    M = xs.size
    t = np.asarray(targets, dtype=float)
    Q = t.size
    lo_val, hi_val = t - r_far, t + r_far
    lo = np.searchsorted(xs, lo_val, side="left")
    hi = np.searchsorted(xs, hi_val, side="right")
    # wrapped tails (r_far < pi, so at most one side wraps per target)
    hi_w = np.where(hi_val > np.pi,
                    np.searchsorted(xs, hi_val - TWO_PI, side="right"), 0)
    lo_w = np.where(lo_val < -np.pi,
                    np.searchsorted(xs, lo_val + TWO_PI, side="left"), M)

    streams = []
    for starts, counts in [(lo, hi - lo), (np.zeros(Q, dtype=np.int64), hi_w),
                           (lo_w, M - lo_w)]:
        counts = np.maximum(counts, 0)
        total = int(counts.sum())
        if total == 0:
            continue
        rep_q = np.repeat(np.arange(Q), counts)
        within = np.arange(total) - np.repeat(
            np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
        streams.append((rep_q, starts[rep_q] + within))
    if streams:
        q_ids = np.concatenate([s[0] for s in streams])
        idx = np.concatenate([s[1] for s in streams])
    else:
        q_ids = np.empty(0, dtype=np.int64)
        idx = np.empty(0, dtype=np.int64)

    d = periodic_dist(t[q_ids], xs[idx])
    keep = d < r_far
    q_ids, idx, d = q_ids[keep], idx[keep], d[keep]
    order = np.argsort(q_ids, kind="stable")
    q_ids, idx, d = q_ids[order], idx[order], d[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(q_ids, minlength=Q))])
    return NeighborTable(indptr.astype(np.int64), idx, d, r_near)


def classify_neighbors(springs, targets, dt: float, delta: float
                       ) -> NeighborTable:
    """Neighbor table for arbitrary targets, indices in the springs' own
    ordering."""
    perm = np.argsort(springs.x, kind="stable")
    xs = springs.x[perm]
    table = _classify_sorted(xs, np.atleast_1d(targets), dt, delta)
    table.idx = perm[table.idx]
    return table


# ---------------------------------------------------------------------------
# per-distance weight rows
# ---------------------------------------------------------------------------

class WeightTable:
    """Vectorized builder of raw weight rows Q_m(d), m = 0..m_max.

    Rows are assembled per time cell [a dt, (a+1) dt], a = 0..W-1: the
    first (possibly clipped) cell is integrated per distance, the full
    cells above it come from a precomputed suffix table. Each cell uses
    the p-point interpolation stencil leaning toward older values,
    clamped so only cell 0 may touch the unknown slot m = 0.
    """

    def __init__(self, window: Window, dt: float, W: int, p: int, m_max: int,
                 n_gauss: int = 16):
        if m_max + 1 < p:
            raise ValueError("m_max too small for the stencil width")
        self.window = window
        self.dt = dt
        self.W = W
        self.p = p
        self.m_max = m_max
        gn, gw = gauss_legendre(n_gauss)
        self._gn, self._gw = gn, gw

        starts = np.empty(W, dtype=np.int64)
        full = np.zeros((W, p))
        for a in range(W):
            m_min = 0 if a == 0 else 1
            m0 = int(stencil_start(a + 0.5, m_min, m_max, p))
            starts[a] = m0
            tau = (a + 0.5 + 0.5 * gn) * dt
            wts = 0.5 * dt * gw * (1.0 - window.phi(tau))
            v = interp_weights(tau / dt, np.full(tau.size, m0), p)
            full[a] = wts @ v
        self._starts = starts
        # suffix[a] = sum of scattered full-cell rows for cells > a
        suffix = np.zeros((W, m_max + 1))
        for a in range(W - 2, -1, -1):
            suffix[a] = suffix[a + 1]
            s = starts[a + 1]
            suffix[a, s:s + p] += full[a + 1]
        self._suffix = suffix

    def rows(self, d: np.ndarray) -> np.ndarray:
        """Raw weight rows for distances d (values in [0, delta))."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        dt, p = self.dt, self.p
        a_lo = np.minimum((d / dt).astype(np.int64), self.W - 1)
        cell_end = (a_lo + 1) * dt
        half = 0.5 * (cell_end - d)
        tau = d[:, None] + half[:, None] * (self._gn[None, :] + 1.0)
        wts = half[:, None] * self._gw[None, :] \
            * (1.0 - self.window.phi(tau))
        m0 = self._starts[a_lo]
        v = interp_weights((tau / dt).ravel(),
                           np.repeat(m0, self._gn.size), p)
        v = v.reshape(d.size, self._gn.size, p)
        clip_part = np.einsum("bg,bgp->bp", wts, v)
        out = self._suffix[a_lo].copy()
        np.add.at(out, (np.arange(d.size)[:, None],
                        m0[:, None] + np.arange(p)[None, :]), clip_part)
        return out


def local_weights(d: float, window: Window, dt: float, W: int, p: int,
                  m_max: int) -> np.ndarray:
    """Raw weight row for a single distance (reference entry point; heavy
    callers should build one WeightTable and batch)."""
    return WeightTable(window, dt, W, p, m_max).rows(np.array([d]))[0]


# ---------------------------------------------------------------------------
# spring-equation operators
# ---------------------------------------------------------------------------

class LocalOperators:
    """Assembled implicit matrix S, its factorization, and the concatenated
    explicit stack operator, all in position-sorted spring order.

    Attributes
    ----------
    perm : original index of sorted spring i (x_original[perm] is sorted).
    S : csr (M, M), entries (beta_j/2) Q_0(d_jl) for d_jl < dt.
    C : csr (M, m_max * M); column (m-1) * M + l multiplies sigma_l^{n+1-m}.
    pivot_fallback : True if the unpivoted factorization was rejected.
    """

    def __init__(self, springs, window: Window, dt: float, W: int, p: int,
                 m_max: int, prune: float = 1e-14, chunk: int = 200_000):
        self.perm = np.argsort(springs.x, kind="stable")
        self.x = springs.x[self.perm]
        self.beta = springs.beta[self.perm]
        self.dt, self.W, self.p, self.m_max = dt, W, p, m_max
        self.delta = window.delta
        M = self.x.size
        self.M = M

        table = _classify_sorted(self.x, self.x, dt, window.delta)
        self.ntyp = table.mean_count
        wt = WeightTable(window, dt, W, p, m_max)
        self._weights = wt
        recv = np.repeat(np.arange(M), np.diff(table.indptr))
        src, dist = table.idx, table.dist

        near = dist < dt
        rows_near = wt.rows(dist[near]) if near.any() else np.zeros((0, m_max + 1))
        S = csr_matrix((0.5 * self.beta[recv[near]] * rows_near[:, 0],
                        (recv[near], src[near])), shape=(M, M))
        S.eliminate_zeros()
        self.S = S
        self._factorize(identity(M, format="csr") + S)

        # concatenated explicit operator, two passes to avoid a dense
        # (pairs, m_max) intermediate at large M
        tol = prune * dt
        counts = np.zeros(M, dtype=np.int64)
        for s in range(0, dist.size, chunk):
            rows = wt.rows(dist[s:s + chunk])
            nz = (np.abs(rows[:, 1:]) > tol).sum(axis=1)
            counts += np.bincount(recv[s:s + chunk], weights=nz,
                                  minlength=M).astype(np.int64)
        nnz = int(counts.sum())
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        data = np.empty(nnz)
        indices = np.empty(nnz, dtype=np.int32)
        pos = 0
        mcols = np.arange(1, m_max + 1)
        for s in range(0, dist.size, chunk):
            rows = wt.rows(dist[s:s + chunk])[:, 1:]
            r, l = recv[s:s + chunk], src[s:s + chunk]
            mask = np.abs(rows) > tol
            cols = ((mcols[None, :] - 1) * M + l[:, None])[mask]
            vals = (0.5 * self.beta[r, None] * rows)[mask]
            n_new = vals.size
            data[pos:pos + n_new] = vals
            indices[pos:pos + n_new] = cols
            pos += n_new
        self.C = csr_matrix((data, indices, indptr), shape=(M, m_max * M))

    def _factorize(self, A):
        A = A.tocsc()
        scale = max(1.0, np.abs(A.data).max())
        self.pivot_fallback = False
        try:
            lu = splu(A, permc_spec="NATURAL", diag_pivot_thresh=0.0)
            if np.abs(lu.U.diagonal()).min() < 1e-14 * scale:
                raise RuntimeError("small pivot")
        except RuntimeError:
            self.pivot_fallback = True
            lu = splu(A)
            if np.abs(lu.U.diagonal()).min() < 1e-14 * scale:
                raise RuntimeError(
                    "implicit matrix I + S is numerically singular; "
                    "check dt/beta/geometry")
        self._lu = lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I + S) sigma = rhs (sorted ordering)."""
        return self._lu.solve(rhs)

    def explicit_memory(self, stack_flat: np.ndarray) -> np.ndarray:
        """sum_{m>=1} C^(m) sigma^{n+1-m}; stack_flat is the (m_max, M)
        recent-density block in sorted order, flattened newest first."""
        return self.C @ stack_flat


class TargetOperator:
    """½-scaled weight operator for field evaluation at fixed targets.

    Columns m * M + l (m = 0..m_max) multiply sigma_l^{n+1-m}; apply to
    the full flattened stack including the just-solved newest densities.
    """

    def __init__(self, targets, ops: LocalOperators, window: Window):
        t = np.atleast_1d(np.asarray(targets, dtype=float))
        self.targets = t
        M, m_max = ops.M, ops.m_max
        table = _classify_sorted(ops.x, t, ops.dt, window.delta)
        recv = np.repeat(np.arange(t.size), np.diff(table.indptr))
        rows = ops._weights.rows(table.dist) if table.idx.size \
            else np.zeros((0, m_max + 1))
        mcols = np.arange(m_max + 1)
        cols = (mcols[None, :] * M + table.idx[:, None]).ravel()
        vals = (0.5 * rows).ravel()
        rr = np.repeat(recv, m_max + 1)
        keep = vals != 0.0
        self.A = csr_matrix((vals[keep], (rr[keep], cols[keep])),
                            shape=(t.size, (m_max + 1) * M))

    def eval(self, stack_full_flat: np.ndarray) -> np.ndarray:
        return self.A @ stack_full_flat


def eval_local_at_targets(targets, stack_full: np.ndarray, springs,
                          window: Window, dt: float, W: int, p: int,
                          m_max: int) -> np.ndarray:
    """One-off local-field evaluation.

    stack_full[m] = densities sigma^{n+1-m} (m = 0..m_max) in the springs'
    own ordering. Returns u_L(x, t_{n+1}) at the targets.
    """
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    stack_full = np.asarray(stack_full)
    if stack_full.shape != (m_max + 1, springs.M):
        raise ValueError(f"stack shape {stack_full.shape} != "
                         f"{(m_max + 1, springs.M)}")
    table = classify_neighbors(springs, t, dt, window.delta)
    if table.idx.size == 0:
        return np.zeros(t.size)
    wt = WeightTable(window, dt, W, p, m_max)
    rows = wt.rows(table.dist)
    recv = np.repeat(np.arange(t.size), np.diff(table.indptr))
    vals = np.einsum("bm,mb->b", rows, stack_full[:, table.idx])
    return 0.5 * np.bincount(recv, weights=vals, minlength=t.size)
