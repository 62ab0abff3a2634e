"""Acceptance gate: nine end-to-end criteria with pinned seeds.

Each test prints one PASS/FAIL line with the measured numbers before
asserting, so the run log doubles as the acceptance report. Several
criteria drive the CLI commands directly; the rest call the library.
Full run takes a few minutes, dominated by the convergence sweeps and
the scaling measurement.
"""

import time

import numpy as np
import pytest

import wfp.cli as cli
from wfp.analysis import klein_gordon_cutoff, windowed_spectrum
from wfp.config import derive_params
from wfp.history import (HistoryState, advance_alpha, compute_sk,
                         mode_tail_bound, precompute_kernels, truncation_tail)
from wfp.local import LocalOperators, eval_local_at_targets, local_weights, periodic_dist
from wfp.marcher import simulate
from wfp.nufft import NufftPlan, nudft1_direct, nudft2_direct
from wfp.potential import (GaussianDensity, IncidentPulse, SpringSet,
                           eval_scattered_field, reference_march_free,
                           reference_march_periodic, slp_gaussian_exact)
from wfp import stability
from wfp.window import Window

B12 = np.log(1e12)


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[{num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


# ---------------------------------------------------------------------------
# 1. manufactured-solution convergence orders
# ---------------------------------------------------------------------------

_CONV_BASE = {
    "M": 10,
    "interval": [-2.5, 2.5],
    "min_sep": 0.05,
    "beta": [0.1, 3.0],
    "T": 18.849555921538759,   # 6 pi
    "bc": "periodic",
    "eps": 1e-12,
    "gamma": 0.5,
    "targets": {"kind": "linspace", "start": -3.0, "stop": 3.0, "n": 9},
    "n_times": 33,
}

# low orders see a clean power law on smooth pulses; p = 6, 8 need carrier
# signals so the error stays above the window floor for >= 4 sweep points
_CONV_INSTANCES = [
    {**_CONV_BASE, "p_list": [2, 4],
     "dts": [0.04, 0.02, 0.01, 0.005, 0.0025],
     "density": {"kind": "gaussian", "mu": [10.0, 14.0], "t0": [2.0, 3.0]}},
    {**_CONV_BASE, "p_list": [6],
     "dts": [0.02, 0.01, 0.005, 0.0025, 0.00125],
     "density": {"kind": "modulated", "envelope_mu": 0.25,
                 "carrier": [40.0, 50.0], "t0": [10.5, 12.5]}},
    {**_CONV_BASE, "p_list": [8],
     "dts": [0.02, 0.01, 0.005, 0.0025, 0.00125],
     "density": {"kind": "modulated", "envelope_mu": 0.15,
                 "carrier": [62.0, 72.0], "t0": [14.5, 16.5]}},
]


def test_criterion_1_convergence_orders(tmp_path):
    tic = time.perf_counter()
    results = {}
    for i, cfg in enumerate(_CONV_INSTANCES):
        out = tmp_path / f"conv{i}"
        out.mkdir()
        summary = cli.cmd_converge(cli.ExperimentSpec("converge", cfg, 12, out))
        for p_str, d in summary["per_p"].items():
            results[int(p_str)] = d

    ok = True
    bits = []
    for p in (2, 4, 6, 8):
        d = results[p]
        errs = np.array(d["errors"])
        dts = np.array(d["dts"])
        n_above = int((errs > 1e-11).sum())
        order = d["order"]
        order_ok = order is not None and abs(order - (p + 1)) <= 0.5
        # where dt^{p+1} is under 1e-12 the measurement has left the power
        # law; the plateau it lands on must sit at or below 1e-10
        qual = errs[dts ** (p + 1) < 1e-12]
        plateau_ok = qual.size == 0 or qual[-1] <= 1e-10
        ok = ok and order_ok and n_above >= 4 and plateau_ok
        bits.append(f"p{p}:{order:.2f}/{n_above}pts")
    elapsed = time.perf_counter() - tic
    _report(1, "manufactured convergence orders", ok,
            f"{', '.join(bits)}; target p+1 +- 0.5 with >=4 points above "
            f"floor, plateau <= 1e-10; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2. periodic dual-route equivalence
# ---------------------------------------------------------------------------

def test_criterion_2_periodic_oracle_equivalence():
    dt, n_steps = 0.01, 500
    pulse = IncidentPulse(mu=10.0, t0=3.4)
    cfg = derive_params(dt, p=6, bc="periodic")
    worst = 0.0
    for M in (1, 3, 10):
        rng = np.random.default_rng(100 + M)
        x = np.sort(rng.uniform(-1.5, 1.5, M))
        beta = rng.uniform(0.3, 2.5, M)
        springs = SpringSet(x, beta)
        res = simulate(springs, pulse, cfg, n_steps * dt, n_out=2,
                       keep_densities=True)
        ref = reference_march_periodic(
            springs, pulse.data(springs, np.arange(n_steps + 1) * dt),
            dt, n_steps, p=6)
        worst = max(worst, float(np.abs(res.densities - ref).max()))
    ok = worst <= 1e-9
    _report(2, "periodic dual-route equivalence", ok,
            f"max density diff {worst:.3e} <= 1e-9 over M=1,3,10, "
            f"{n_steps} steps")
    assert ok


# ---------------------------------------------------------------------------
# 3. free-space radiation boundary
# ---------------------------------------------------------------------------

def test_criterion_3_free_space_boundary():
    rng = np.random.default_rng(77)
    M, dt = 5, 0.01
    springs = SpringSet(np.sort(rng.uniform(-1.5, 1.5, M)),
                        rng.uniform(0.5, 2.5, M))
    pulse = IncidentPulse(mu=30.0, t0=2.7)
    cfg = derive_params(dt, p=8, bc="free")
    T = 4 * np.pi
    targets = np.linspace(-2.3, 2.3, 9)
    res = simulate(springs, pulse, cfg, T, targets=targets, n_out=64)
    n_steps = res.diagnostics["n_steps"]
    ref_sig = reference_march_free(
        springs, pulse.data(springs, np.arange(n_steps + 1) * dt), dt,
        n_steps, p=8)
    ref_fld = eval_scattered_field(ref_sig, dt, springs, targets,
                                   t_steps=res.out_steps, bc="free", p=8)
    err = float(np.abs(res.field.u - ref_fld.u).max())
    ok = err <= 1e-10
    _report(3, "free-space radiation boundary", ok,
            f"max field diff {err:.3e} <= 1e-10 inside the box up to T=4pi")
    assert ok


# ---------------------------------------------------------------------------
# 4. spectral tail bound
# ---------------------------------------------------------------------------

def test_criterion_4_spectral_tail_bound():
    # the tail must be resolvable: modes up to 2K have to stay below the
    # grid Nyquist pi/dt, which forces a window wider than the production
    # delta = W dt tie. The bound itself is formulated for any delta.
    delta, dt, T = 2.0, 0.01, 6.0
    W = int(round(delta / dt))
    win = Window(delta=delta, b=B12)
    n_steps = int(round(T / dt))
    rng = np.random.default_rng(21)

    worst_sum = 0.0
    worst_mode = 0.0
    hyp_all = True
    for _ in range(10):
        M = int(rng.integers(2, 9))
        x = np.sort(rng.uniform(-2.5, 2.5, M))
        mu = rng.uniform(30.0, 50.0, M)
        t0 = rng.uniform(1.0, 3.0, M)
        amp = rng.uniform(0.5, 1.5, M)
        K0 = float(np.max(2.0 * np.sqrt(mu * B12)))
        K = int(np.ceil(K0 + 2.0 * B12 / delta))
        K_big = 2 * K
        assert K_big <= np.pi / dt
        C = float(np.max(amp * (np.pi / (2.0 * mu)) ** 0.25))

        plan = NufftPlan(x, K_big)
        kern = precompute_kernels(win, K_big, dt, W)
        st = HistoryState.zeros(K_big, W, dt)
        hist = np.zeros((n_steps + 1, 2 * K_big + 1), dtype=complex)
        for n in range(n_steps):
            sig = amp * np.exp(-mu * (n * dt - t0) ** 2)
            advance_alpha(st, kern, compute_sk(plan, sig))
            hist[n + 1] = st.alpha

        chk = truncation_tail(hist, dt, K=K, K0=K0, C=C, M=M, window=win)
        hyp_all = hyp_all and chk.hypothesis_ok
        worst_sum = max(worst_sum, chk.measured / chk.bound)

        for k in np.unique(rng.integers(K + 1, K_big + 1, 5)):
            norm = float(np.sqrt(np.trapezoid(
                np.abs(hist[:, K_big + int(k)]) ** 2, dx=dt)))
            bnd = mode_tail_bound(int(k), K0, C, M, T, win)
            worst_mode = max(worst_mode, norm / bnd)

    ok = hyp_all and worst_sum <= 1.0 and worst_mode <= 1.0
    _report(4, "spectral tail bound", ok,
            f"worst tail-sum ratio {worst_sum:.2e}, worst per-mode ratio "
            f"{worst_mode:.2e}, 10 instances, 5 modes each")
    assert ok


# ---------------------------------------------------------------------------
# 5. small-system stability battery
# ---------------------------------------------------------------------------

def test_criterion_5_stability_battery():
    # (a) single spring, piecewise-constant: decay exactly for alpha in (0,2)
    grid = np.linspace(0.05, 2.5, 50)
    a_ok = all(cli._impulse_decays(1, float(a))[0] == (a < 2.0) for a in grid)

    # (b) piecewise-linear: unconditional decay
    b_ok = all(cli._impulse_decays(2, a)[0] for a in (0.1, 1.0, 10.0, 100.0))

    # (c) two-spring characteristic roots
    rng = np.random.default_rng(5)
    c_ok = True
    for _ in range(20):
        a = float(rng.uniform(0.05, 0.95))
        k = float(rng.uniform(0.1, 12.0))
        r = stability.char_roots_m2_p1(a, k)
        s = int(np.floor(k))
        c_ok = c_ok and (r.unit_root_defect < 1e-10
                         and r.max_other_magnitude < 1.0 - 1e-8
                         and r.winding_minus == s + 1
                         and r.winding_plus == s + 2)

    # (d) norm bound on random data, both a mild and a near-critical case
    d_ok = True
    worst_frac = 0.0
    try:
        for L, bval, dtv in [(0.5, 1.0, 1.0), (1.9, 1.0, 2.2)]:
            worst, C = stability.verify_stability_bound(
                L, bval, dtv, trials=100, n_steps=400, seed=0)
            worst_frac = max(worst_frac, worst / C)
    except RuntimeError:
        d_ok = False

    # (e) two-spring convergence order
    slope, _ = stability.measure_convergence_m2(
        2.0, 0.8, 8.0, [0.1, 0.05, 0.025, 0.0125], p=2)
    e_ok = abs(slope - 2.0) < 0.3

    ok = a_ok and b_ok and c_ok and d_ok and e_ok
    _report(5, "small-system stability battery", ok,
            f"decay-grid {'ok' if a_ok else 'BAD'}, p2-decay "
            f"{'ok' if b_ok else 'BAD'}, roots 20/20 {'ok' if c_ok else 'BAD'}, "
            f"bound worst ratio {worst_frac:.3f} of C, order {slope:.2f}")
    assert ok


# ---------------------------------------------------------------------------
# 6. cost scaling in the scatterer count
# ---------------------------------------------------------------------------

def test_criterion_6_cost_scaling(tmp_path):
    tic = time.perf_counter()
    cfg = cli.resolve_config("timing", None, False)
    out = tmp_path / "timing"
    out.mkdir()
    summary = cli.cmd_timing(cli.ExperimentSpec("timing", cfg, 0, out))
    elapsed = time.perf_counter() - tic
    exp = summary["exponent"]
    thr = summary["throughput_scatterer_steps_per_s"]
    ok = 0.9 <= exp <= 1.25
    _report(6, "cost scaling", ok,
            f"per-step exponent {exp:.3f} in [0.9, 1.25] over M=1e3..1e5; "
            f"throughput {thr[-1]:.3g} scatterer-steps/s (informational); "
            f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 7. two-wall resonant filtering
# ---------------------------------------------------------------------------

def test_criterion_7_resonant_filtering(tmp_path):
    cfg = cli.resolve_config("spectra", None, False)
    out = tmp_path / "spectra"
    out.mkdir()
    summary = cli.cmd_spectra(cli.ExperimentSpec("spectra", cfg, 1, out))
    peaks = summary["peaks"][:3]   # stored in descending magnitude
    matched = set()
    worst_off = 0.0
    for pk in peaks:
        m = int(round(pk["omega"] / np.pi))
        off = abs(pk["omega"] - m * np.pi) / (m * np.pi)
        worst_off = max(worst_off, off)
        if off <= 0.02:
            matched.add(m)
    ratio = summary["energy_ratio"]
    ok = matched == {1, 2, 3} and ratio <= 0.10
    _report(7, "two-wall resonant filtering", ok,
            f"3 largest peaks at multiples {sorted(matched)} of pi, worst "
            f"offset {100 * worst_off:.2f}% <= 2%; transmitted/incident "
            f"energy {ratio:.2e} <= 0.10")
    assert ok


# ---------------------------------------------------------------------------
# 8. dispersive cutoff of a dense weak array
# ---------------------------------------------------------------------------

def test_criterion_8_dispersive_cutoff():
    spacing = 4.0 / 150.0
    c1 = klein_gordon_cutoff(1.55, spacing)    # beta ~ U[0.1, 3.0]
    c2 = klein_gordon_cutoff(5.05, spacing)    # beta ~ U[0.1, 10.0]
    cut_ok = abs(c1 - 7.6) < 0.05 and abs(c2 - 13.8) < 0.05

    rng = np.random.default_rng(42)
    M, dt = 150, 0.0085
    springs = SpringSet(np.linspace(-2.0, 2.0, M), rng.uniform(0.1, 10.0, M))
    pulse = IncidentPulse(mu=5.0, t0=4.5)
    cfg = derive_params(dt, p=8, bc="free")
    T = 25.0
    n_steps = int(np.ceil(T / dt - 1e-9))
    res = simulate(springs, pulse, cfg, T, targets=[2.5],
                   out_steps=np.arange(n_steps + 1), include_incident=True)
    spec = windowed_spectrum(res.field.u[:, 0], dt, taper_frac=0.1)
    e_trans = float(np.trapezoid(spec.magnitude ** 2, spec.omega))
    mag_inc = pulse.spectrum_envelope(spec.omega)
    e_inc = float(np.trapezoid(mag_inc ** 2, spec.omega))
    frac = e_trans / e_inc
    ok = cut_ok and frac <= 0.15
    _report(8, "dispersive cutoff", ok,
            f"cutoffs {c1:.4g} ~ 7.6 and {c2:.4g} ~ 13.8; dense-array "
            f"transmitted energy fraction {frac:.2e} <= 0.15")
    assert ok


# ---------------------------------------------------------------------------
# 9. property suite
# ---------------------------------------------------------------------------

def test_criterion_9_property_suite():
    rng = np.random.default_rng(60)

    # nonuniform transforms: fast path vs direct sums, and adjointness
    x = rng.uniform(-np.pi, np.pi, 300)
    K = 150
    plan = NufftPlan(x, K, eps=1e-12)
    c = rng.standard_normal(300) + 1j * rng.standard_normal(300)
    d = rng.standard_normal(2 * K + 1) + 1j * rng.standard_normal(2 * K + 1)
    err1 = np.abs(plan.type1(c) - nudft1_direct(x, c, K)).max() \
        / np.abs(c).sum()
    err2 = np.abs(plan.type2(d) - nudft2_direct(x, d, K)).max() \
        / np.abs(d).sum()
    nufft_ok = err1 <= 1e-11 and err2 <= 1e-11
    lhs = np.vdot(d, plan.type1(c))
    rhs = np.vdot(plan.type2(d), c)
    adj = abs(lhs - rhs) / abs(lhs)
    adj_ok = adj <= 1e-11

    # window normalization
    win = Window(delta=0.35, b=B12)
    norm_def = abs(win.hat_phi_prime(0.0) - 1.0)
    norm_ok = norm_def <= 1e-13

    # undriven mode advance is an exact rotation
    Kr, dtr, Wr = 8, 0.02, 25
    kern = precompute_kernels(Window(delta=Wr * dtr, b=B12), Kr, dtr, Wr)
    st = HistoryState.zeros(Kr, Wr, dtr)
    st.alpha = rng.standard_normal(2 * Kr + 1) + 0j
    st.alpha_t = rng.standard_normal(2 * Kr + 1) + 0j
    kk = np.arange(-Kr, Kr + 1).astype(float)
    e0 = np.abs(st.alpha_t) ** 2 + (kk * np.abs(st.alpha)) ** 2
    zero = np.zeros(2 * Kr + 1, dtype=complex)
    for _ in range(50):
        advance_alpha(st, kern, zero)
    e1 = np.abs(st.alpha_t) ** 2 + (kk * np.abs(st.alpha)) ** 2
    rot_def = float(np.abs(e1 - e0).max() / e0.max())
    rot_ok = rot_def <= 1e-12

    # assembled sparse operators against the one-distance weight loop
    cfgo = derive_params(0.02, p=6, bc="periodic")
    wino = Window.from_config(cfgo)
    springs = SpringSet(rng.uniform(-1.0, 1.0, 10), rng.uniform(0.5, 3.0, 10))
    ops = LocalOperators(springs, wino, cfgo.dt, cfgo.W, cfgo.p, cfgo.mMax)
    stack = rng.standard_normal((cfgo.mMax, 10))
    want = np.zeros(10)
    for j in range(10):
        for l in range(10):
            dist = periodic_dist(ops.x[j], ops.x[l])
            if dist < wino.delta:
                row = local_weights(float(dist), wino, cfgo.dt, cfgo.W,
                                    cfgo.p, cfgo.mMax)
                want[j] += 0.5 * ops.beta[j] * row[1:] @ stack[:, l]
    op_def = float(np.abs(ops.explicit_memory(stack.ravel()) - want).max())
    op_ok = op_def <= 1e-12

    # split reconstruction: local + history halves vs the closed form
    cfgs = derive_params(0.01, p=6, bc="periodic")
    wins = Window.from_config(cfgs)
    sset = SpringSet(np.array([-0.9, 0.2, 1.1]), np.ones(3))
    dens = [GaussianDensity(mu=18.0, t0=1.6), GaussianDensity(mu=22.0, t0=2.0),
            GaussianDensity(mu=20.0, t0=1.8)]
    n_steps = 300
    plan_s = NufftPlan(sset.x, cfgs.K, cfgs.eps)
    kern_s = precompute_kernels(wins, cfgs.K, cfgs.dt, cfgs.W)
    st_s = HistoryState.zeros(cfgs.K, cfgs.W, cfgs.dt)
    for n in range(n_steps):
        sig = np.array([dd(n * cfgs.dt) for dd in dens])
        advance_alpha(st_s, kern_s, compute_sk(plan_s, sig))
    t_end = n_steps * cfgs.dt
    targets = np.linspace(-3.0, 3.0, 7)
    stack_full = np.stack([np.array([dd(t_end - m * cfgs.dt) for dd in dens])
                           for m in range(cfgs.mMax + 1)])
    u_l = eval_local_at_targets(targets, stack_full, sset, wins, cfgs.dt,
                                cfgs.W, cfgs.p, cfgs.mMax)
    u_h = NufftPlan(targets, cfgs.K, cfgs.eps).type2(st_s.alpha).real
    exact = slp_gaussian_exact(sset, dens, targets, t_end, bc="periodic")
    split_def = float(np.abs(u_l + u_h - exact).max())
    split_ok = split_def <= 1e-10

    ok = nufft_ok and adj_ok and norm_ok and rot_ok and op_ok and split_ok
    _report(9, "property suite", ok,
            f"nufft {max(err1, err2):.1e}, adjoint {adj:.1e}, norm "
            f"{norm_def:.1e}, rotation {rot_def:.1e}, operators "
            f"{op_def:.1e}, split {split_def:.1e}")
    assert ok
