"""End-to-end acceptance battery for the lattice transport package.

Each test prints one `ACCEPTANCE <n> <name>: PASS/FAIL (...)` line (pytest
-rA echoes them) and asserts the stated tolerance.  The momentum sweeps are
module-scoped fixtures at desk scale (tau = 3e4 per trajectory), so the
module takes roughly 100 minutes single-core; everything else finishes in
a few minutes.  Numbers quoted in comments come from probe runs with this
exact seed; the tests recompute them from scratch.
"""

import json
import math

import numpy as np
import pytest

from latticemc import (AtomState, ChaosSpec, EnsembleSpec, RngStream,
                       SimParams, UMapState, benettin_lyapunov,
                       chaos_probability, chaotic_window, cloud_observables,
                       cloud_variance, energy, energy_map, estimate_diffusion,
                       fit_excess_slope, integrate_observed, max_lyapunov,
                       mixed_window, momentum_grid, propagate_with_jumps,
                       regular_window, run_ensemble, sample_recoil,
                       sweep_momentum, u_map_chaotic, u_map_chaotic_variance)
from latticemc.cli import main
from latticemc.models import EnergyMapInputs

SEED = 20260819

PARAMS = SimParams()                      # gamma 3.3e-3, omega_r 1e-5, delta -0.01
PARAMS_SHALLOW = SimParams(gamma=3.3e-3, omega_r=1e-5, delta=-0.0005)


def report(num, name, ok, detail):
    line = f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------- sweeps

@pytest.fixture(scope="module")
def ch_sweep():
    # chaotic-sea window: every bin inside the Lambda=1 plateau.  The
    # variance fit is pinned to a common window so its length does not vary
    # with p (cap-chosen windows scale like p^4 here and leak into the
    # slope); 610-3500 spans >= 3.6 well-crossing periods above p ~ 780,
    # enough to average out the coherent potential-exchange oscillation
    # that shorter windows alias into the fit
    return sweep_momentum(PARAMS, momentum_grid(780.0, 1200.0, 12),
                          n_traj=400, duration=3e4,
                          chaos=ChaosSpec(n_traj=8), seed=SEED,
                          fit_window=(610.0, 3500.0))


@pytest.fixture(scope="module")
def tr_sweep():
    # wide log grid straddling the chaotic->regular transition near p ~ 1300
    return sweep_momentum(PARAMS, momentum_grid(500.0, 8600.0, 8),
                          n_traj=200, duration=3e4,
                          chaos=ChaosSpec(n_traj=8), seed=SEED)


@pytest.fixture(scope="module")
def rg_sweep():
    # shallow detuning: mixed bins at the bottom, long regular tail above.
    # 3.5% momentum jitter spreads each bin over a full period of the
    # regular ladder's phase 2/(omega_r p), so the measured D is the
    # phase-averaged one that the p^-1 law describes (at 1% jitter the
    # high bins keep most of the coherent cos^2 factor and the
    # pedestal-subtracted slope comes out near -0.5)
    return sweep_momentum(PARAMS_SHALLOW, momentum_grid(600.0, 4480.0, 14),
                          n_traj=600, duration=3e4,
                          chaos=ChaosSpec(n_traj=24), seed=SEED,
                          p_sigma_frac=0.035)


# ------------------------------------------------------------ criterion 1

def test_energy_and_bloch_norm_conservation():
    spec = EnsembleSpec(n_traj=4, p0_mean=800.0, duration=1e4,
                        sample_interval=10.0, seed=SEED, stream_index=(0xA1,))
    res = run_ensemble(spec, SimParams(gamma=0.0))
    s = res.samples
    h_t = (0.5 * PARAMS.omega_r * s[:, :, 1] ** 2
           - s[:, :, 2] * np.cos(s[:, :, 0])
           - 0.5 * PARAMS.delta * s[:, :, 4])
    rel_h = float(np.max(np.abs(h_t - h_t[:, :1]) / np.abs(h_t[:, :1])))

    norm_dev = 0.0
    for gamma in (0.0, 3.3e-3, 0.033):
        st = AtomState(x=1.0, p=800.0, u=0.6, v=0.0, z=-0.8)
        out = integrate_observed(st, SimParams(gamma=gamma), 1e3,
                                 sample_interval=100.0)
        f = out.final_state
        norm_dev = max(norm_dev, abs(f.u**2 + f.v**2 + f.z**2 - 1.0))

    ok = rel_h < 1e-6 and norm_dev < 1e-8
    report(1, "energy and Bloch norm conservation", ok,
           f"H rel drift {rel_h:.2e} < 1e-6 over tau=1e4; "
           f"norm drift {norm_dev:.2e} < 1e-8 per tau=1e3, gamma up to 0.033")


# ------------------------------------------------------------ criterion 2

def test_recoil_and_jump_statistics():
    n = 10**6
    r = sample_recoil(RngStream(SEED, (0xA2,)).generator(), size=n)
    m1, m2 = float(r.mean()), float((r * r).mean())
    se1, se2 = math.sqrt(1.0 / 3.0 / n), math.sqrt(4.0 / 45.0 / n)
    ok_mom = abs(m1) < 3 * se1 and abs(m2 - 1.0 / 3.0) < 3 * se2

    spec = EnsembleSpec(n_traj=200, p0_mean=1000.0, p0_sigma=10.0,
                        duration=5e3, sample_interval=5.0, seed=SEED,
                        stream_index=(0xA3,))
    res = run_ensemble(spec, PARAMS)
    z_samp = res.samples[:, :, 4].ravel()
    z_jump = np.concatenate([res.jump_tables[i, :k, 6]
                             for i, k in enumerate(res.jump_counts)])
    intervals = np.concatenate([res.jump_tables[i, :k, 7]
                                for i, k in enumerate(res.jump_counts)])

    edges = np.quantile(z_samp, np.linspace(0, 1, 7))
    edges[0] -= 1e-9
    edges[-1] += 1e-9
    dt = spec.sample_interval
    worst = 0.0
    for k in range(6):
        sel = (z_samp > edges[k]) & (z_samp <= edges[k + 1])
        expected = float(np.sum(0.5 * PARAMS.gamma * (z_samp[sel] + 1.0)) * dt)
        observed = int(np.count_nonzero(
            (z_jump > edges[k]) & (z_jump <= edges[k + 1])))
        worst = max(worst, abs(observed - expected) / math.sqrt(expected))
    ok_rate = worst <= 3.0

    mean_iv = float(intervals.mean())
    ok_iv = abs(mean_iv - 2.0 / PARAMS.gamma) <= 0.25 * (2.0 / PARAMS.gamma)

    ok = ok_mom and ok_rate and ok_iv
    report(2, "recoil moments and jump statistics", ok,
           f"recoil mean {m1:+.2e} (3se {3*se1:.1e}), m2-1/3 {m2-1/3:+.2e} "
           f"(3se {3*se2:.1e}); rate-vs-z worst dev {worst:.2f} sigma; "
           f"mean interval {mean_iv:.0f} vs {2/PARAMS.gamma:.0f} +-25%")


# ------------------------------------------------------------ criterion 3

def test_chaos_classification():
    stats = chaos_probability(800.0, SimParams(delta=0.0),
                              RngStream(SEED, (0xA4,)), n_traj=8, tau_max=2e4)
    ok_zero = stats.Lambda == 0.0

    st = AtomState(x=1.0, p=800.0, u=0.0, v=0.0, z=-1.0)
    ham = PARAMS.with_gamma(0.0)
    lv = max_lyapunov(st, ham, tau_max=5e4)
    lb = benettin_lyapunov(st, ham, tau_max=5e4)
    rel = abs(lv.lam - lb.lam) / max(abs(lv.lam), abs(lb.lam))
    ok_agree = rel < 0.20 and lv.lam > stats.threshold

    ok = ok_zero and ok_agree
    report(3, "chaos classification", ok,
           f"Lambda(delta=0) = {stats.Lambda}; variational {lv.lam:.3e} vs "
           f"Benettin {lb.lam:.3e}, rel diff {rel:.1%} < 20%")


# ------------------------------------------------------------ criterion 4

def test_chaotic_window_diffusion_law(ch_sweep):
    win = chaotic_window(ch_sweep)
    assert len(win) >= 4, "chaotic window too short to fit"
    slope, se = fit_excess_slope(ch_sweep, win, floor=PARAMS.gamma / 12.0)
    ratios = [ch_sweep[i].d_measured / ch_sweep[i].d_ch for i in win]
    ok_slope = -2.3 <= slope <= -1.7
    ok_ratio = all(0.5 <= r <= 2.0 for r in ratios)
    ok = ok_slope and ok_ratio
    report("4a", "chaotic-window diffusion law", ok,
           f"slope {slope:+.3f} +- {se:.3f} in [-2.3, -1.7] over "
           f"{len(win)} bins p={ch_sweep[win[0]].p0:.0f}-"
           f"{ch_sweep[win[-1]].p0:.0f}; model ratios "
           f"{min(ratios):.2f}-{max(ratios):.2f} in [0.5, 2]")


def test_regular_window_diffusion_law(rg_sweep):
    win = regular_window(rg_sweep)
    assert len(win) >= 4, "regular window too short to fit"
    slope, se = fit_excess_slope(rg_sweep, win,
                                 floor=PARAMS_SHALLOW.gamma / 12.0)
    ratios = [rg_sweep[i].d_measured / rg_sweep[i].d_reg for i in win]
    ok_slope = -1.3 <= slope <= -0.7
    ok_ratio = all(0.5 <= r <= 2.0 for r in ratios)
    ok = ok_slope and ok_ratio
    report("4b", "regular-window diffusion law", ok,
           f"slope {slope:+.3f} +- {se:.3f} in [-1.3, -0.7] over "
           f"{len(win)} bins p={rg_sweep[win[0]].p0:.0f}-"
           f"{rg_sweep[win[-1]].p0:.0f}; model ratios "
           f"{min(ratios):.2f}-{max(ratios):.2f} in [0.5, 2]")


# ------------------------------------------------------------ criterion 5

def test_transition_markers_coincide(tr_sweep):
    lam_break = next(i for i, r in enumerate(tr_sweep)
                     if r.n_chaotic < r.n_chaos_traj)
    dep = next(i for i, r in enumerate(tr_sweep)
               if np.isfinite(r.d_measured)
               and not (1 / 3 <= r.d_measured / r.d_ch <= 3))
    ok = abs(lam_break - dep) <= 2
    report(5, "transition markers coincide", ok,
           f"first Lambda<1 at bin {lam_break} "
           f"(p={tr_sweep[lam_break].p0:.0f}), first 3x departure from the "
           f"chaotic law at bin {dep} (p={tr_sweep[dep].p0:.0f}); "
           f"|{lam_break}-{dep}| <= 2")


# ------------------------------------------------------------ criterion 6

def test_mixed_window_blend(rg_sweep):
    win = mixed_window(rg_sweep)
    assert win, "no mixed bins realized in the shallow sweep"
    ratios = [rg_sweep[i].d_measured / rg_sweep[i].d_blend for i in win]
    ok = all(0.5 <= r <= 2.0 for r in ratios)
    detail = ", ".join(
        f"p={rg_sweep[i].p0:.0f} L={rg_sweep[i].Lambda:.2f} r={r:.2f}"
        for i, r in zip(win, ratios))
    report(6, "mixed-window blend", ok, detail + "; all in [0.5, 2]")


# ------------------------------------------------------------ criterion 7

def test_cloud_expansion_law():
    # mid-depth lattice, ensemble started at a single momentum deep in the
    # chaotic sea: the coherent potential-exchange wiggle (an effective
    # negative tau^2 term the cubic law lacks) shrinks like delta^2/p^4
    # relative to the cubic term at the validity-window end, so this point
    # keeps the formula's blind spot below a few percent
    params = SimParams(delta=-0.005)
    spec = EnsembleSpec(n_traj=600, p0_mean=900.0, p0_sigma=0.0,
                        x0_dist="uniform", duration=2.6e4,
                        sample_interval=50.0, seed=SEED, stream_index=(0xA7,))
    res = run_ensemble(spec, params)
    est = estimate_diffusion(res)
    cs = cloud_observables(res)
    pred = cloud_variance(float(cs.var_x[0]), float(cs.var_p[0]), est.d,
                          params, cs.times)
    sel = cs.valid & (cs.times > 0)
    rel = (pred[sel] - cs.var_x[sel]) / cs.var_x[sel]
    worst = float(np.max(np.abs(rel)))
    rms = float(np.sqrt(np.mean(rel ** 2)))
    tail = cs.times[sel] >= 0.9 * cs.times[sel][-1]
    end = float(np.mean(rel[tail]))
    ok = worst < 0.15 and rms < 0.15 and abs(end) < 0.15
    report(7, "cloud expansion law", ok,
           f"D = {est.d:.3e} +- {est.stderr:.1e}; worst point {worst:+.1%}, "
           f"rms {rms:.1%}, tail {end:+.1%}, all < 15% over "
           f"tau <= {cs.valid_until:.0f}")


# ------------------------------------------------------------ criterion 8

def test_crossing_and_energy_maps():
    rng = RngStream(SEED, (0xA5,)).generator()
    n, m, p_ref = 20000, 20, 1000.0
    u_sq = np.empty(n)
    for i in range(n):
        s = UMapState()
        for _ in range(m):
            s = u_map_chaotic(s, PARAMS, p_ref, rng)
        u_sq[i] = s.u ** 2
    target = u_map_chaotic_variance(PARAMS, p_ref, m)
    se = target * math.sqrt(2.0 / n)       # u_M is near-Gaussian at m=20
    ok_map = abs(float(u_sq.mean()) - target) < 3 * se

    rec = propagate_with_jumps(AtomState(x=1.0, p=1000.0, u=0.0, v=0.0, z=-1.0),
                               PARAMS, 1.3e5, RngStream(SEED, (0xA8,)),
                               sample_interval=50.0)
    tab = rec.jump_table
    mism, jumps = [], []
    for j in range(1, tab.shape[0]):
        prev_post = AtomState(x=tab[j - 1, 2], p=tab[j - 1, 3] + tab[j - 1, 1],
                              u=0.0, v=0.0, z=-1.0)
        h_prev = energy(prev_post, PARAMS)
        inp = EnergyMapInputs(H_prev=h_prev, x=tab[j, 2], u=tab[j, 4],
                              z=tab[j, 6], p=tab[j, 3], p_recoil=tab[j, 1],
                              interval=tab[j, 7],
                              saturation_mean=tab[j, 8] / tab[j, 7])
        h_map = energy_map(inp, PARAMS)
        pre = AtomState(x=tab[j, 2], p=tab[j, 3], u=tab[j, 4], v=tab[j, 5],
                        z=tab[j, 6])
        post = AtomState(x=tab[j, 2], p=tab[j, 3] + tab[j, 1],
                         u=0.0, v=0.0, z=-1.0)
        h_sim = energy(post, PARAMS)
        mism.append(abs(h_map - h_sim))
        jumps.append(h_sim - energy(pre, PARAMS))
    rms_jump = float(np.sqrt(np.mean(np.square(jumps))))
    mean_mism = float(np.mean(mism))
    ok_energy = mean_mism < 0.10 * rms_jump

    ok = ok_map and ok_energy
    report(8, "crossing and energy maps", ok,
           f"<u_M^2> {float(u_sq.mean()):.4f} vs {target:.4f} "
           f"(3se {3*se:.4f}); energy map mean |mismatch| {mean_mism:.2e} "
           f"< 10% of rms jump {rms_jump:.2e} over {len(mism)} jumps")


# ------------------------------------------------------------ criterion 9

def test_determinism_and_error_scaling(tmp_path):
    doc = {"params": {"gamma": 3.3e-3, "delta": -0.01},
           "sweep": {"p_min": 700.0, "p_max": 1100.0, "n_bins": 8,
                     "n_traj": 6, "duration": 4e3, "seed": SEED},
           "chaos": {"n_traj": 2, "tau_max": 1e4, "threshold": 1e-3},
           "output": {"prefix": "acc"}}
    a, b = tmp_path / "a", tmp_path / "b"
    for out, threads in ((a, "1"), (b, "3")):
        cfg = tmp_path / f"cfg_{threads}.json"
        cfg.write_text(json.dumps(doc))
        rc = main(["sweep", "--config", str(cfg), "--out", str(out),
                   "--threads", threads])
        assert rc == 0
    same = (a / "acc_sweep.csv").read_bytes() == (b / "acc_sweep.csv").read_bytes()

    ses = []
    for tag, n in ((1, 300), (2, 600)):
        spec = EnsembleSpec(n_traj=n, p0_mean=1000.0, p0_sigma=10.0,
                            duration=3e3, seed=SEED, stream_index=(0xA9, tag))
        ses.append(estimate_diffusion(run_ensemble(spec, PARAMS)).stderr)
    ratio = ses[0] / ses[1]
    ok_scale = math.sqrt(2.0) * 0.8 <= ratio <= math.sqrt(2.0) * 1.2

    ok = same and ok_scale
    report(9, "determinism and error scaling", ok,
           f"sweep CSV byte-identical across worker counts: {same}; "
           f"stderr ratio at 2x trajectories {ratio:.2f} vs sqrt(2) +-20%")
