"""History half of the field split: windowed Fourier modes and their
exact one-step recurrences.

Each mode alpha_k obeys a driven oscillator alpha_k'' + k^2 alpha_k =
(windowed source), and the drive enters only through lagged values of the
density coefficients S_k. One step of Duhamel's formula turns into the
exact rotation of (alpha, alpha') plus increments (h_k, g_k) that are
discrete convolutions of precomputed kernels p_k, q_k with the recent
S_k stack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nufft import NufftPlan
from .quadrature import gauss_legendre
from .window import Window

_SMALL_PHASE = 1e-4   # |k dt| below this uses the series for sin(k dt)/k


def _sin_over_k(k, t):
    """sin(k t)/k with the k -> 0 limit t, elementwise."""
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    # np.sinc(x) = sin(pi x)/(pi x), so sin(k t)/k = t * sinc(k t / pi)
    return t * np.sinc(k * t / np.pi)


def mode_numbers(K: int) -> np.ndarray:
    return np.arange(-K, K + 1)


@dataclass
class StepKernels:
    """Tables p_k(m dt), q_k(m dt) for m = 0..W-1, stored for k = 0..K.

    Both kernels are even in k; row lookup for signed k uses |k|.
    """

    K: int
    W: int
    dt: float
    pk: np.ndarray   # (W, K+1)
    qk: np.ndarray   # (W, K+1)

    def full(self, table: np.ndarray) -> np.ndarray:
        """Expand a (W, K+1) even table to (W, 2K+1) over k = -K..K."""
        return np.concatenate([table[:, :0:-1], table], axis=1)


def precompute_kernels(window: Window, K: int, dt: float, W: int,
                       n_gauss: int = 16, k_chunk: int = 256) -> StepKernels:
    """Integrate the influence kernel against one step of the oscillator
    propagator:

        p_k(m dt) = int_0^dt sin(k (dt-mu))/k * Psi_k(m dt + mu) dmu
        q_k(m dt) = int_0^dt cos(k (dt-mu))   * Psi_k(m dt + mu) dmu

    by fixed Gauss-Legendre quadrature on [0, dt]. Psi_k is supported on
    [0, delta] = [0, W dt], so m ranges over 0..W-1. Work is chunked over
    k to bound the temporary (k, W * n_gauss) arrays.
    """
    nodes, wts = gauss_legendre(n_gauss)
    mu = 0.5 * dt * (nodes + 1.0)           # (nG,) nodes in [0, dt]
    wmu = 0.5 * dt * wts
    tau = (np.arange(W)[:, None] * dt + mu[None, :]).ravel()   # (W*nG,)
    php = window.phi_prime(tau)
    phpp = window.phi_dprime(tau)

    pk = np.empty((W, K + 1))
    qk = np.empty((W, K + 1))
    sin_fac = dt - mu                        # base for sin(k(dt-mu))/k
    for k0 in range(0, K + 1, k_chunk):
        kk = np.arange(k0, min(k0 + k_chunk, K + 1), dtype=float)[:, None]
        psi = (2.0 * np.cos(kk * tau) * php
               + _sin_over_k(kk, tau) * phpp)          # (nk, W*nG)
        psi = psi.reshape(kk.size, W, n_gauss)
        sk = _sin_over_k(kk, sin_fac)                  # (nk, nG)
        ck = np.cos(kk * sin_fac)
        pk[:, k0:k0 + kk.size] = np.einsum("kg,kmg->mk", sk * wmu, psi)
        qk[:, k0:k0 + kk.size] = np.einsum("kg,kmg->mk", ck * wmu, psi)
    return StepKernels(K=K, W=W, dt=dt, pk=pk, qk=qk)


@dataclass
class HistoryState:
    """Mode amplitudes, their time derivatives, and the recent S_k stack.

    sk_stack[m] holds S_k at time t_{n-1-m} (the W values before the
    current step); push_sk rotates the newest value in after the mode
    advancement consumes it.
    """

    K: int
    dt: float
    n: int = 0
    alpha: np.ndarray = field(default=None)
    alpha_t: np.ndarray = field(default=None)
    sk_stack: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, K: int, W: int, dt: float) -> "HistoryState":
        nf = 2 * K + 1
        return cls(K=K, dt=dt, n=0,
                   alpha=np.zeros(nf, dtype=complex),
                   alpha_t=np.zeros(nf, dtype=complex),
                   sk_stack=np.zeros((W, nf), dtype=complex))

    @property
    def W(self) -> int:
        return self.sk_stack.shape[0]

    def push_sk(self, sk_new: np.ndarray) -> None:
        self.sk_stack[1:] = self.sk_stack[:-1]
        self.sk_stack[0] = sk_new
        self.n += 1

    def save(self, path: str) -> None:
        meta = {"K": self.K, "dt": self.dt, "n": self.n, "W": self.W}
        with open(path, "wb") as fh:
            header = json.dumps(meta).encode()
            fh.write(len(header).to_bytes(8, "little"))
            fh.write(header)
            fh.write(self.alpha.tobytes())
            fh.write(self.alpha_t.tobytes())
            fh.write(self.sk_stack.tobytes())

    @classmethod
    def load(cls, path: str) -> "HistoryState":
        with open(path, "rb") as fh:
            hlen = int.from_bytes(fh.read(8), "little")
            meta = json.loads(fh.read(hlen).decode())
            nf = 2 * meta["K"] + 1
            alpha = np.frombuffer(fh.read(16 * nf), dtype=complex).copy()
            alpha_t = np.frombuffer(fh.read(16 * nf), dtype=complex).copy()
            stack = np.frombuffer(fh.read(16 * nf * meta["W"]),
                                  dtype=complex).reshape(meta["W"], nf).copy()
        return cls(K=meta["K"], dt=meta["dt"], n=meta["n"],
                   alpha=alpha, alpha_t=alpha_t, sk_stack=stack)


def compute_sk(plan: NufftPlan, sigma: np.ndarray) -> np.ndarray:
    """S_k = (1/2 pi) sum_j sigma_j e^{i k x_j} for |k| <= K."""
    return plan.type1(sigma) / (2.0 * np.pi)


def step_hg(kernels: StepKernels, state: HistoryState, sk_new: np.ndarray):
    """Drive increments for the step t_n -> t_{n+1}:

        h_k = dt * sum_{m=0}^{W-1} p_k(m dt) S_k(t_{n-m})

    (same with q for g). sk_new supplies the m = 0 term S_k(t_n); the
    stack supplies m = 1..W-1. The stack is not rotated here.
    """
    W = kernels.W
    if state.sk_stack.shape[0] != W:
        raise ValueError(f"S_k stack depth {state.sk_stack.shape[0]} != W={W}")
    pk = kernels.full(kernels.pk)
    qk = kernels.full(kernels.qk)
    dt = kernels.dt
    h = pk[0] * sk_new
    g = qk[0] * sk_new
    if W > 1:
        h = h + np.einsum("mk,mk->k", pk[1:], state.sk_stack[: W - 1])
        g = g + np.einsum("mk,mk->k", qk[1:], state.sk_stack[: W - 1])
    return dt * h, dt * g


def _rotation_factors(K: int, dt: float):
    """cos(k dt) and sin(k dt)/k for k = -K..K, series-stabilized near 0."""
    k = mode_numbers(K).astype(float)
    z = k * dt
    cos_z = np.cos(z)
    sinc = np.where(np.abs(z) < _SMALL_PHASE,
                    dt * (1.0 - z * z / 6.0 * (1.0 - z * z / 20.0)),
                    np.divide(np.sin(z), k, out=np.full_like(z, dt),
                              where=k != 0))
    return cos_z, sinc


def advance_alpha(state: HistoryState, kernels: StepKernels,
                  sk_new: np.ndarray) -> None:
    """Advance all modes one step in place:

        alpha  <- alpha cos(k dt) + alpha' sin(k dt)/k + h_k
        alpha' <- -k sin(k dt) alpha + alpha' cos(k dt) + g_k

    then rotate sk_new into the stack. The homogeneous part is the exact
    oscillator propagator, so the only per-step error is the quadrature
    inside h/g.
    """
    h, g = step_hg(kernels, state, sk_new)
    cos_z, sinc = _rotation_factors(state.K, state.dt)
    k = mode_numbers(state.K).astype(float)
    a, at = state.alpha, state.alpha_t
    a_new = cos_z * a + sinc * at + h
    at_new = -(k * k) * sinc * a + cos_z * at + g
    state.alpha = a_new
    state.alpha_t = at_new
    state.push_sk(sk_new)


def eval_history(state: HistoryState, plan: NufftPlan) -> np.ndarray:
    """u_H at the plan's points: sum_k alpha_k e^{-i k x}."""
    return plan.type2(state.alpha)


def conjugate_symmetry_defect(state: HistoryState) -> float:
    """max |alpha_k - conj(alpha_{-k})|; zero when densities are real."""
    a = state.alpha
    return float(np.abs(a - np.conj(a[::-1])).max())


# ---------------------------------------------------------------------------
# spectral-tail measurement against the closed-form bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailCheck:
    measured: float
    bound: float
    hypothesis_ok: bool


def truncation_tail(alpha_hist: np.ndarray, dt: float, K: int, K0: float,
                    C: float, M: int, window: Window) -> TailCheck:
    """Compare the measured spectral tail of a mode history against the
    a-priori bound  2 pi^2 T M C b / (delta sinh b).

    Parameters
    ----------
    alpha_hist : (Nt, 2 K_big + 1) mode amplitudes over t = 0..T, computed
        with an enlarged cutoff K_big > K so the tail is observable.
    K : nominal cutoff; the tail is the set K < |k| <= K_big.
    K0 : bandlimit of the driving densities.
    C : density norm bound, max_j ||sigma_j||_{L2(R)}.
    M : number of scatterers.

    Returns the measured L2-in-time norm of sum_{tail} |alpha_k(t)|, the
    bound, and whether the hypothesis K >= K0 + 2b/delta holds (the bound
    is only claimed under that hypothesis).
    """
    alpha_hist = np.asarray(alpha_hist)
    nt, nf = alpha_hist.shape
    K_big = (nf - 1) // 2
    if K_big <= K:
        raise ValueError("history must be computed with K_big > K")
    k = mode_numbers(K_big)
    tail_cols = np.abs(k) > K
    tail_sum = np.abs(alpha_hist[:, tail_cols]).sum(axis=1)   # f(t)
    T = (nt - 1) * dt
    measured = float(np.sqrt(np.trapezoid(tail_sum ** 2, dx=dt)))
    b = window.b
    delta = window.delta
    bound = float(2.0 * np.pi ** 2 * T * M * C * b / (delta * np.sinh(b)))
    hypothesis_ok = bool(K >= K0 + 2.0 * b / delta)
    return TailCheck(measured=measured, bound=bound, hypothesis_ok=hypothesis_ok)


def mode_tail_bound(k: int, K0: float, C: float, M: int, T: float,
                    window: Window) -> float:
    """Per-mode bound on ||alpha_k||_{L2(0,T)} for |k| > K0 + 2b/delta:

        (b / sinh b) * 3 M C T / (k sqrt((delta(|k| - K0)/2)^2 - b^2))
    """
    b = window.b
    delta = window.delta
    ak = abs(k)
    arg = (delta * (ak - K0) / 2.0) ** 2 - b * b
    if arg <= 0:
        raise ValueError("mode inside the window-broadened band; bound void")
    return float(b / np.sinh(b) * 3.0 * M * C * T / (ak * np.sqrt(arg)))
