"""Full time stepping: the per-step linear solve coupling the local
operators to the windowed mode recurrences, the far-field roll-off for
free-space runs, and the end-to-end simulation driver.

Per step t_n -> t_{n+1}:

  1. S_k(t_n) from the newest densities (type-1 transform);
  2. advance all history modes (exact rotation + kernel-driven h, g);
  3. assemble rhs = g^{n+1} + explicit memory matvec + beta * u_H(x_j);
  4. solve (I + S) sigma^{n+1} = -rhs with the stored factorization;
  5. push sigma^{n+1} into the recent-density stack.

Free-space boundary behavior is periodic marching plus a scheduled
projection that rolls the history field off to zero near |x| = pi with
outgoing-wave phase, so wrap-around energy never re-enters the scatterer
region.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import WfpConfig, validate_geometry
from .fields import SpaceTimeField
from .history import (HistoryState, advance_alpha, compute_sk, eval_history,
                      precompute_kernels)
from .local import LocalOperators, TargetOperator
from .nufft import NufftPlan
from .potential import IncidentPulse, SpringSet
from .window import Window


def dt_for_ntyp(M: int, ntyp: float, eps: float = 1e-12,
                gamma: float = 0.5) -> float:
    """Time step that makes the mean delta-neighborhood size about ntyp.

    ntyp ~ M * (2 delta) / (2 pi) with delta = W dt, so dt = pi ntyp / (M W).
    Advisory only; pass the result to derive_params yourself.
    """
    b = math.log(1.0 / eps)
    W = max(1, round(2.0 * b / (math.pi * gamma)))
    return math.pi * ntyp / (M * W)


def domain_scale(half_width: float, cfg: WfpConfig) -> float:
    """Scale factor lam mapping a user interval [-A, A] into the widest
    admissible scatterer region: x_box = lam * x_user, t_box = lam * t_user,
    beta_box = beta_user / lam (unit wave speed is preserved)."""
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    room = np.pi - 3.0 * cfg.delta if cfg.bc == "free" else np.pi
    return 0.999 * room / half_width


class Marcher:
    """Owns all per-run state; one instance marches one simulation."""

    def __init__(self, springs: SpringSet, cfg: WfpConfig):
        validate_geometry(springs.x, cfg)
        self.cfg = cfg
        self.springs = springs
        self.window = Window.from_config(cfg)
        self.ops = LocalOperators(springs, self.window, cfg.dt, cfg.W,
                                  cfg.p, cfg.mMax)
        self.plan = NufftPlan(self.ops.x, cfg.K, cfg.eps)
        self.kernels = precompute_kernels(self.window, cfg.K, cfg.dt, cfg.W,
                                          n_gauss=cfg.nG)
        self.hist = HistoryState.zeros(cfg.K, cfg.W, cfg.dt)
        # stack[m] = sigma^{n-m} in sorted order; depth mMax+1 so a full
        # ravel view (including the newest) is available for target evals
        self.stack = np.zeros((cfg.mMax + 1, springs.M))
        self.n = 0
        self._primed = False
        if cfg.bc == "free":
            self._build_roll_factors()

    # -- initialization ------------------------------------------------------

    def prime(self, g0: np.ndarray) -> None:
        """Set the initial densities sigma^0 = -g(0) (original ordering).

        With zero initial field data the integral terms vanish at t = 0,
        so the equation there is purely algebraic. Causal data has
        g(0) ~ 0; a sizable g(0) means the run starts mid-signal.
        """
        if self._primed:
            raise RuntimeError("marcher already primed")
        g0 = np.asarray(g0, dtype=float)
        self.stack[0] = -g0[self.ops.perm]
        self._primed = True

    # -- stepping -------------------------------------------------------------

    def step(self, g_new: np.ndarray) -> None:
        """Advance one step; g_new is the data vector at t_{n+1} in the
        springs' original ordering."""
        if not self._primed:
            raise RuntimeError("call prime(g(0)) before stepping")
        cfg = self.cfg
        sk_new = compute_sk(self.plan, self.stack[0].astype(complex))
        advance_alpha(self.hist, self.kernels, sk_new)

        u_h = eval_history(self.hist, self.plan).real
        rhs = np.asarray(g_new, dtype=float)[self.ops.perm] \
            + self.ops.explicit_memory(self.stack[:cfg.mMax].ravel()) \
            + self.ops.beta * u_h
        sig_new = self.ops.solve(-rhs)
        if not np.all(np.isfinite(sig_new)):
            raise RuntimeError(f"non-finite densities at step {self.n + 1}")

        self.stack[1:] = self.stack[:-1]
        self.stack[0] = sig_new
        self.n += 1
        if cfg.bc == "free" and self.n % cfg.dtProjSteps == 0:
            self.rbc_project()

    @property
    def sigma(self) -> np.ndarray:
        """Newest densities in the original ordering."""
        out = np.empty(self.springs.M)
        out[self.ops.perm] = self.stack[0]
        return out

    # -- far-field roll-off ----------------------------------------------------

    def _build_roll_factors(self) -> None:
        cfg = self.cfg
        K, W = cfg.K, cfg.W
        n = 2 * K
        x = 2.0 * np.pi * np.arange(n) / n
        x[K:] -= 2.0 * np.pi
        w = np.ones(n)
        d = np.zeros(n)
        right = np.arange(K - 2 * W, K)
        arg_r = np.pi - cfg.delta - x[right]
        w[right] = self.window.phi(arg_r)
        d[right] = self.window.phi_prime(arg_r)
        left = np.arange(K, K + 2 * W)
        arg_l = x[left] + np.pi - cfg.delta
        w[left] *= self.window.phi(arg_l)
        # left-going waves carry v = +d/dx u, so the rolled velocity picks
        # up +phi' there (the right side gets +phi' from v = -d/dx u)
        d[left] += self.window.phi_prime(arg_l)
        self._roll_w = w
        self._roll_d = d

    def rbc_project(self) -> None:
        """Roll the history field off to zero near the seam |x| = pi.

        Transforms (alpha, alpha') to grid values (u, v) on the 2K-point
        grid (the k = +K mode is dropped), applies the outgoing-phase
        roll u <- psi u, v <- psi v + psi' u with the direction-correct
        sign on each side, and transforms back.
        """
        if self.cfg.bc != "free":
            raise RuntimeError("far-field roll-off only applies to free runs")
        K = self.cfg.K
        a, at = self.hist.alpha, self.hist.alpha_t
        u = np.fft.fft(np.fft.ifftshift(a[: 2 * K]))
        v = np.fft.fft(np.fft.ifftshift(at[: 2 * K]))
        u_new = self._roll_w * u
        v_new = self._roll_w * v + self._roll_d * u
        a[: 2 * K] = np.fft.fftshift(np.fft.ifft(u_new))
        a[2 * K] = 0.0
        at[: 2 * K] = np.fft.fftshift(np.fft.ifft(v_new))
        at[2 * K] = 0.0

    # -- field evaluation -------------------------------------------------------

    def field_at(self, targets, target_op: TargetOperator | None = None,
                 target_plan: NufftPlan | None = None) -> np.ndarray:
        """Scattered field u_L + u_H at the targets, at the current time."""
        if target_op is None:
            target_op = TargetOperator(targets, self.ops, self.window)
        if target_plan is None:
            target_plan = NufftPlan(np.atleast_1d(np.asarray(targets, float)),
                                    self.cfg.K, self.cfg.eps)
        u_l = target_op.eval(self.stack.ravel())
        u_h = target_plan.type2(self.hist.alpha).real
        return u_l + u_h

    # -- snapshot / restore -------------------------------------------------------

    def snapshot(self, path: str) -> None:
        np.savez(path, alpha=self.hist.alpha, alpha_t=self.hist.alpha_t,
                 sk_stack=self.hist.sk_stack, stack=self.stack, n=self.n,
                 hist_n=self.hist.n, primed=self._primed)

    def restore(self, path: str) -> None:
        with np.load(path) as z:
            self.hist.alpha = z["alpha"].copy()
            self.hist.alpha_t = z["alpha_t"].copy()
            self.hist.sk_stack = z["sk_stack"].copy()
            self.stack = z["stack"].copy()
            self.n = int(z["n"])
            self.hist.n = int(z["hist_n"])
            self._primed = bool(z["primed"])

    def state_size(self) -> int:
        """Numbers held in mutable per-run state (the O(M mMax + W K)
        memory claim)."""
        return int(self.stack.size + self.hist.alpha.size
                   + self.hist.alpha_t.size + self.hist.sk_stack.size)


@dataclass
class SimulationResult:
    field: SpaceTimeField
    densities: np.ndarray | None
    diagnostics: dict
    config: WfpConfig
    out_steps: np.ndarray = field(default=None)


def _resolve_data(source, springs: SpringSet, times: np.ndarray) -> np.ndarray:
    """Data vectors g_j(t) for every step, shape (len(times), M)."""
    if isinstance(source, IncidentPulse):
        return source.data(springs, times)
    if callable(source):
        return np.stack([np.atleast_1d(np.asarray(source(t), dtype=float))
                         for t in times])
    g = np.asarray(source, dtype=float)
    if g.shape != (times.size, springs.M):
        raise ValueError(f"data array shape {g.shape} != "
                         f"{(times.size, springs.M)}")
    return g


def simulate(springs: SpringSet, source, cfg: WfpConfig, T: float,
             targets=None, n_out: int = 128, out_steps=None,
             keep_densities: bool = False,
             include_incident: bool = False,
             diagnostics_path: str | None = None) -> SimulationResult:
    """March the scattering problem to time T and sample the field.

    Parameters
    ----------
    source : IncidentPulse, callable t -> g(t), or (n_steps+1, M) array.
    targets : field sample points (default: 8 points clear of the seam).
    n_out : number of output times (evenly spaced step indices, always
        including 0 and the final step).
    out_steps : explicit output step indices; overrides n_out. Lets a
        half-step rerun sample the exact same times as its parent run.
    include_incident : add the incident field to the output samples
        (requires an IncidentPulse source).
    keep_densities : retain the full density time series.

    Returns a SimulationResult; the field grid is (targets, output times).
    """
    dt = cfg.dt
    n_steps = int(math.ceil(T / dt - 1e-9))
    times = np.arange(n_steps + 1) * dt
    g = _resolve_data(source, springs, times)
    if include_incident and not isinstance(source, IncidentPulse):
        raise ValueError("include_incident needs an IncidentPulse source")

    if targets is None:
        lim = np.pi - 3.0 * cfg.delta if cfg.bc == "free" else np.pi
        targets = np.linspace(-0.95 * lim, 0.95 * lim, 8)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if cfg.bc == "free" and np.any(np.abs(targets) > np.pi - 2.0 * cfg.delta):
        # inside the roll band the field is transiently clobbered by each
        # projection until inland characteristics refill it
        raise ValueError("free-run targets must satisfy |x| <= pi - 2 delta "
                         f"= {np.pi - 2.0 * cfg.delta:.4f}")

    if out_steps is None:
        n_out = min(n_out, n_steps + 1)
        out_steps = np.unique(np.round(
            np.linspace(0, n_steps, n_out)).astype(np.int64))
    else:
        out_steps = np.unique(np.asarray(out_steps, dtype=np.int64))
        if out_steps.size == 0 or out_steps[0] < 0 or out_steps[-1] > n_steps:
            raise ValueError(f"out_steps must lie in 0..{n_steps}")
    out_rows = {int(s): i for i, s in enumerate(out_steps)}

    u = np.zeros((out_steps.size, targets.size))

    if springs.M == 0:
        # nothing scatters; skip the march entirely
        out_times = out_steps * dt
        if include_incident:
            u = u + source.field(targets[None, :], out_times[:, None])
        return SimulationResult(
            field=SpaceTimeField(x=targets, t=out_times, u=u),
            densities=np.zeros((n_steps + 1, 0)) if keep_densities else None,
            diagnostics={"n_steps": n_steps, "K": cfg.K, "W": cfg.W,
                         "ntyp": 0.0, "median_step_ms": 0.0,
                         "state_numbers": 0, "pivot_fallback": False},
            config=cfg, out_steps=out_steps)

    marcher = Marcher(springs, cfg)
    target_op = TargetOperator(targets, marcher.ops, marcher.window)
    target_plan = NufftPlan(targets, cfg.K, cfg.eps)
    densities = np.zeros((n_steps + 1, springs.M)) if keep_densities else None
    step_ms = np.zeros(n_steps)
    diag_fh = open(diagnostics_path, "w") if diagnostics_path else None
    try:
        marcher.prime(g[0])
        if keep_densities:
            densities[0] = marcher.sigma
        if 0 in out_rows:
            u[out_rows[0]] = marcher.field_at(targets, target_op, target_plan)
        for n in range(n_steps):
            t0 = time.perf_counter()
            marcher.step(g[n + 1])
            step_ms[n] = 1e3 * (time.perf_counter() - t0)
            if keep_densities:
                densities[n + 1] = marcher.sigma
            if (n + 1) in out_rows:
                u[out_rows[n + 1]] = marcher.field_at(targets, target_op,
                                                      target_plan)
            if diag_fh:
                diag_fh.write(json.dumps(
                    {"step": n + 1, "wall_ms": round(step_ms[n], 4),
                     "max_sigma": float(np.abs(marcher.stack[0]).max())}) + "\n")
    finally:
        if diag_fh:
            diag_fh.close()

    out_times = out_steps * dt
    if include_incident:
        u = u + source.field(targets[None, :], out_times[:, None])
    diagnostics = {
        "n_steps": n_steps, "K": cfg.K, "W": cfg.W, "ntyp": marcher.ops.ntyp,
        "median_step_ms": float(np.median(step_ms)) if n_steps else 0.0,
        "state_numbers": marcher.state_size(),
        "pivot_fallback": marcher.ops.pivot_fallback,
    }
    return SimulationResult(
        field=SpaceTimeField(x=targets, t=out_times, u=u),
        densities=densities, diagnostics=diagnostics, config=cfg,
        out_steps=out_steps)
