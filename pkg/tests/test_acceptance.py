"""Acceptance suite: one test per release criterion, each printing a
single ``[ACCEPT] <name>: PASS/FAIL`` line (run with ``pytest -s`` to see
them live).

The Monte Carlo criteria default to the reduced profile (shorter chains,
fewer trials, wider stated tolerances). Set MODCLASS_ACCEPT_PROFILE=full
for the full-protocol run; expect roughly an afternoon of compute on a
small machine.
"""

import math
import os
import sys
import time
from dataclasses import replace

import numpy as np
sys.path.insert(0, os.path.dirname(__file__))

from modclass.numerics import RandomStream
from modclass.sigmodel import ModulationPool, Scenario, synthesize
from modclass.gibbs import (
    InferenceConfig,
    channel_posterior_params,
    gibbs_init,
    pA_posterior_params,
    run_chain,
    sigma2_posterior_params,
)
from modclass.meanfield import free_energy, mf_sweep, mf_update_channel, mf_update_pA, \
    mf_update_sigma2, mf_update_symbol
from modclass.harness import confusion_matrix, emit_outputs, \
    load_preset, run_experiment

from oracle_utils import (
    GridSpec,
    bin_index,
    brute_force_grid_posterior,
    total_variation,
    two_point_pool,
)

FULL = os.environ.get("MODCLASS_ACCEPT_PROFILE", "reduced") == "full"
WORKERS = int(os.environ.get("MODCLASS_WORKERS", "0")) or (os.cpu_count() or 1)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[ACCEPT] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def _accuracy(records, pool):
    per = {}
    for name in pool:
        cell = [r for r in records if r.true_modulation == name]
        per[name] = sum(r.decision == r.true_modulation for r in cell) / len(cell)
    return sum(per.values()) / len(per), per


def test_01_small_instance_posterior_oracle():
    """Gibbs marginals match a brute-force enumeration of the discretized
    joint posterior within total variation 0.05, inside two minutes."""
    started = time.perf_counter()
    pool = two_point_pool()
    scenario = Scenario(N=2, K=1, Mt=1, Mr=1, L=1, tap_powers_db=(0.0,), snr_db=6.0,
                        pool=pool, true_modulation="BIN2")
    stream = RandomStream(314159)
    _, _, _, y = synthesize(scenario, stream.child(0))

    gamma = np.array([3.0, 3.0])
    alpha0, beta0, alpha_h = 2.0, 1.0, 2.0
    grid = GridSpec(
        p_edges=np.linspace(0.0, 1.0, 25),
        s2_edges=np.exp(np.linspace(np.log(0.02), np.log(25.0), 29)),
        h_edges=np.linspace(-2.4, 2.4, 22),
    )
    joint, cand = brute_force_grid_posterior(y, pool, grid, gamma, alpha0, beta0, alpha_h)
    bf = {
        "symbol0": joint.sum(axis=(1, 2, 3, 4, 5)),
        "symbol1": joint.sum(axis=(0, 2, 3, 4, 5)),
        "weights": joint.sum(axis=(0, 1, 3, 4, 5)),
        "sigma2": joint.sum(axis=(0, 1, 2, 4, 5)),
        "channel": joint.sum(axis=(0, 1, 2, 3)),
    }

    config = InferenceConfig(gamma=tuple(gamma), alpha0=alpha0, beta0=beta0,
                             alpha_h=alpha_h, n_iter=100_000, burn_in=2_000)
    result = run_chain(y, scenario, config, stream.child(1), trace="full")
    tr = result.trace
    keep = slice(2_000, None)
    n_kept = tr["p_A"][keep].shape[0]
    emp = {
        "symbol0": np.bincount(tr["s_idx"][keep, 0, 0, 0], minlength=cand.n_candidates) / n_kept,
        "symbol1": np.bincount(tr["s_idx"][keep, 1, 0, 0], minlength=cand.n_candidates) / n_kept,
        "weights": np.bincount(bin_index(grid.p_edges, tr["p_A"][keep, 0]),
                               minlength=len(bf["weights"])) / n_kept,
        "sigma2": np.bincount(bin_index(grid.s2_edges, tr["sigma2"][keep]),
                              minlength=len(bf["sigma2"])) / n_kept,
    }
    h = tr["h"][keep].ravel()
    hist2d = np.zeros_like(bf["channel"])
    np.add.at(hist2d, (bin_index(grid.h_edges, h.real), bin_index(grid.h_edges, h.imag)), 1.0)
    emp["channel"] = hist2d / n_kept

    tvs = {k: total_variation(bf[k], emp[k]) for k in bf}
    elapsed = time.perf_counter() - started
    ok = max(tvs.values()) <= 0.05 and elapsed <= 120.0
    detail = (", ".join(f"TV[{k}]={v:.3f}" for k, v in tvs.items())
              + f"; limit 0.05; {elapsed:.0f}s/120s")
    report("01 small-instance posterior oracle", ok, detail)
    assert max(tvs.values()) <= 0.05, detail
    assert elapsed <= 120.0, detail


def test_02_conjugacy_exactness():
    """Weight-posterior parameters equal prior + counts exactly, and the
    noise shape equals alpha0 + N*K*Mr exactly, over 1000 random states."""
    pool = ModulationPool.from_names(["QPSK", "PSK8", "QAM16"])
    rng = RandomStream(271828)
    checked = 0
    for _ in range(1000):
        N = int(rng.gen.integers(2, 12))
        K = int(rng.gen.integers(1, 3))
        Mt = int(rng.gen.integers(1, 3))
        Mr = int(rng.gen.integers(1, 3))
        gamma = float(rng.gen.integers(1, 60))
        scenario = Scenario(N=N, K=K, Mt=Mt, Mr=Mr, L=1, tap_powers_db=(0.0,),
                            snr_db=10.0, pool=pool, true_modulation="QPSK")
        config = InferenceConfig(gamma=gamma, alpha0=1e-3, n_iter=10)
        state = gibbs_init(config, scenario, rng.child(checked))
        counts = np.bincount(state.s_labels.ravel(), minlength=3).astype(float)
        assert np.array_equal(pA_posterior_params(state, config), gamma + counts)
        alpha, _ = sigma2_posterior_params(state, config)
        assert alpha == 1e-3 + N * K * Mr
        checked += 1
    report("02 conjugacy exactness", True, f"{checked} random states, exact equality")


def test_03_channel_conditional_oracle():
    """Channel conditional equals the generic Bayesian linear-Gaussian
    posterior (1e-8) and recovers the true taps in the noiseless limit (1e-4)."""
    pool = ModulationPool.from_names(["QPSK", "PSK8", "QAM16"])
    worst_gap = 0.0
    rng = RandomStream(161803)
    for trial in range(25):
        scenario = Scenario(N=4, K=1, Mt=1, Mr=1, L=2, tap_powers_db=(0.0, -3.0),
                            snr_db=12.0, pool=pool, true_modulation="QPSK")
        config = InferenceConfig(gamma=5.0, n_iter=10, alpha_h=float(rng.gen.uniform(1.0, 50.0)))
        stream = rng.child(trial)
        _, _, sigma2, y = synthesize(scenario, stream.child(0))
        state = gibbs_init(config, scenario, stream.child(1), y=y)
        state.sigma2 = float(stream.child(2).gen.uniform(0.05, 2.0))
        mean, cov = channel_posterior_params(state, 0, 0, config)
        X = state.s_val[:, 0, 0][:, None] * state.W
        prec = np.eye(2) / config.alpha_h + X.conj().T @ X / state.sigma2
        cov_ref = np.linalg.inv(prec)
        mean_ref = cov_ref @ (X.conj().T @ y[:, 0, 0]) / state.sigma2
        worst_gap = max(worst_gap,
                        float(np.max(np.abs(mean - mean_ref))),
                        float(np.max(np.abs(cov - cov_ref))))
    moment_ok = worst_gap <= 1e-8

    scenario = Scenario(N=8, K=2, Mt=1, Mr=1, L=2, tap_powers_db=(0.0, -3.0),
                        snr_db=math.inf, pool=pool, true_modulation="QPSK")
    config = InferenceConfig(gamma=5.0, n_iter=10)
    stream = RandomStream(141421)
    s, chan, _, y = synthesize(scenario, stream.child(0))
    state = gibbs_init(config, scenario, stream.child(1), y=y)
    for idx in np.ndindex(s.shape):
        state.s_idx[idx] = int(np.argmin(np.abs(state.cand.values - s[idx])))
    state.sigma2 = 1e-12
    mean, _ = channel_posterior_params(state, 0, 0, config)
    recovery_gap = float(np.max(np.abs(mean - chan.taps[0, 0])))
    recovery_ok = recovery_gap <= 1e-4

    ok = moment_ok and recovery_ok
    report("03 channel-conditional oracle", ok,
           f"max moment gap {worst_gap:.2e} <= 1e-8; recovery gap {recovery_gap:.2e} <= 1e-4")
    assert moment_ok and recovery_ok


def test_04_meanfield_monotonicity_and_collapse():
    """Free energy never decreases across sweeps (100 random instances), and
    all four mean-field updates collapse onto the Gibbs conditionals for
    point-mass factors within 1e-10."""
    from test_meanfield import degenerate_mf_state, random_mf_state, scenario_

    config = InferenceConfig(gamma=5.0, n_iter=10)
    worst_drop = 0.0
    for seed in range(100):
        state, _, _ = random_mf_state(9000 + seed)
        prev = free_energy(state, state.y, config)
        for _ in range(3):
            mf_sweep(state, config)
            now = free_energy(state, state.y, config)
            worst_drop = max(worst_drop, (prev - now) / max(1.0, abs(prev)))
            prev = now
    mono_ok = worst_drop <= 1e-6

    from modclass.sigmodel import synthesize as synth
    from modclass.gibbs import symbol_conditional_pmf

    worst_collapse = 0.0
    for seed in range(10):
        scenario = scenario_()
        stream = RandomStream(7100 + seed)
        _, _, _, y = synth(scenario, stream.child(0))
        gstate = gibbs_init(config, scenario, stream.child(1), y=y)
        gstate.sigma2 = float(stream.child(2).gen.uniform(0.1, 1.5))
        mf = degenerate_mf_state(gstate, config, sigma2_ratio=1.0)
        gap = np.max(np.abs(mf_update_pA(mf, config) - pA_posterior_params(gstate, config)))
        worst_collapse = max(worst_collapse, float(gap))
        mf.gamma_t = 1e13 * gstate.p_A
        g_pmf = symbol_conditional_pmf(gstate, 2, 0, 1, config)
        m_pmf = mf_update_symbol(mf, 2, 0, 1, config)
        worst_collapse = max(worst_collapse, float(np.max(np.abs(m_pmf - g_pmf))))
        mf.q_s[2, 0, 1] = 0.0
        mf.q_s[2, 0, 1, gstate.s_idx[2, 0, 1]] = 1.0
        for mt in range(scenario.Mt):
            for mr in range(scenario.Mr):
                g_mean, g_cov = channel_posterior_params(gstate, mt, mr, config)
                m_mean, m_cov = mf_update_channel(mf, mt, mr, config)
                worst_collapse = max(worst_collapse,
                                     float(np.max(np.abs(m_mean - g_mean))),
                                     float(np.max(np.abs(m_cov - g_cov))))
                mf.h_mean[mt, mr] = gstate.h[mt, mr]
                mf.h_cov[mt, mr] = 0.0
        a_g, b_g = sigma2_posterior_params(gstate, config)
        a_m, b_m = mf_update_sigma2(mf, config)
        worst_collapse = max(worst_collapse, abs(a_m - a_g), abs(b_m - b_g) / b_g)
    collapse_ok = worst_collapse <= 1e-10

    ok = mono_ok and collapse_ok
    report("04 mean-field monotonicity and collapse", ok,
           f"worst relative drop {worst_drop:.2e} <= 1e-6; "
           f"worst collapse gap {worst_collapse:.2e} <= 1e-10")
    assert mono_ok, f"free energy dropped by {worst_drop}"
    assert collapse_ok, f"collapse gap {worst_collapse}"


def test_05_confusion_matrix_reproduction():
    """Per-modulation accuracy at 5 dB within the stated band of the
    reference diagonal [96.3, 88.1, 66.0]."""
    target = np.array([96.3, 88.1, 66.0])
    preset = load_preset("table2")
    if FULL:
        config = replace(preset, trials=200, workers=WORKERS)
        band = 10.0
    else:
        config = replace(preset, trials=100, iterations=500, burn_in=425,
                         workers=WORKERS)
        band = 15.0
    records = run_experiment(config)
    cm = confusion_matrix(records, pool_names=config.pool)
    diag = 100.0 * np.diag(cm.matrix)
    gaps = diag - target
    ok = bool(np.all(np.abs(gaps) <= band))
    detail = (f"profile={'full' if FULL else 'reduced'}, diagonal "
              + "/".join(f"{d:.1f}" for d in diag)
              + f" vs {target.tolist()} band +-{band}")
    report("05 confusion-matrix reproduction", ok, detail)
    assert ok, detail


def _paired_experiment(preset_name: str, **overrides):
    config = replace(load_preset(preset_name), workers=WORKERS, **overrides)
    return config, run_experiment(config)


def test_06_restart_annealing_ordering():
    """At 10 dB, restarts+annealing beats (or ties) plain Gibbs and the
    superconstellation variant, and restarts alone already beat plain Gibbs,
    over paired trials."""
    trials = 200
    iters = 2000 if FULL else 500
    burn = int(0.85 * iters)
    accs = {}
    for method in ("gibbs+restarts+annealing", "gibbs+restarts", "gibbs",
                   "superconstellation"):
        config, records = _paired_experiment(
            "fig3", snr_db=(10.0,), trials=trials, iterations=iters, burn_in=burn,
            method=method)
        accs[method], _ = _accuracy(records, config.pool)
    ra = accs["gibbs+restarts+annealing"]
    ok = (ra >= accs["gibbs"] and ra >= accs["superconstellation"]
          and accs["gibbs+restarts"] >= accs["gibbs"])
    detail = (f"restarts+annealing {ra:.3f} vs restarts {accs['gibbs+restarts']:.3f} "
              f"vs gibbs {accs['gibbs']:.3f} vs superconstellation "
              f"{accs['superconstellation']:.3f}; {trials} paired trials/modulation, M={iters}")
    report("06 restart/annealing ordering", ok, detail)
    assert ok, detail


def test_07_channel_length_mismatch():
    """Underestimating the channel length hurts badly; overestimating it by
    two taps costs at most five points."""
    trials = 200 if FULL else 200
    iters = 2000 if FULL else 500
    burn = int(0.85 * iters)
    accs = {}
    for lhat in (1, 3, 5):
        config, records = _paired_experiment(
            "fig4", snr_db=(10.0,), trials=trials, iterations=iters, burn_in=burn,
            assumed_taps=lhat)
        accs[lhat], _ = _accuracy(records, config.pool)
    under_ok = accs[1] < accs[3]
    over_ok = abs(accs[5] - accs[3]) <= 0.05
    ok = under_ok and over_ok
    detail = (f"acc(L_hat=1)={accs[1]:.3f} < acc(L_hat=3)={accs[3]:.3f}; "
              f"|acc(L_hat=5)={accs[5]:.3f} - acc(L_hat=3)| <= 0.05; "
              f"{trials} paired trials/modulation, M={iters}")
    report("07 channel-length mismatch ordering", ok, detail)
    assert under_ok, detail
    assert over_ok, detail


def test_08_hybrid_vs_gibbs_small_budgets():
    """The Gibbs-to-mean-field hybrid is at least as accurate as plain Gibbs
    when the iteration budget is small (M in {50, 100})."""
    trials = 200
    results = {}
    for iters in (50, 100):
        burn = int(0.9 * iters)
        for method in ("hybrid", "gibbs"):
            config, records = _paired_experiment(
                "fig6", trials=trials, iterations=iters, burn_in=burn, method=method)
            results[(iters, method)], _ = _accuracy(records, config.pool)
    ok = all(results[(m, "hybrid")] >= results[(m, "gibbs")] for m in (50, 100))
    detail = "; ".join(
        f"M={m}: hybrid {results[(m, 'hybrid')]:.3f} vs gibbs {results[(m, 'gibbs')]:.3f}"
        for m in (50, 100)) + f"; {trials} paired trials/modulation"
    report("08 hybrid vs gibbs at small budgets", ok, detail)
    assert ok, detail


def test_09_psk_confusion_with_four_modulations():
    """With the 4-pool at 5 dB, the two PSK alphabets confuse each other
    heavily: the two cross cells sum to at least 30%."""
    trials = 50  # per modulation; 200 trials across the pool
    iters = 2000 if FULL else 500
    config, records = _paired_experiment(
        "table3", trials=trials, iterations=iters, burn_in=int(0.85 * iters))
    cm = confusion_matrix(records, pool_names=config.pool)
    i8 = config.pool.index("PSK8")
    i16 = config.pool.index("PSK16")
    cross = 100.0 * (cm.matrix[i8, i16] + cm.matrix[i16, i8])
    ok = cross >= 30.0
    detail = (f"PSK8->PSK16 {100 * cm.matrix[i8, i16]:.1f}% + "
              f"PSK16->PSK8 {100 * cm.matrix[i16, i8]:.1f}% = {cross:.1f}% >= 30%; "
              f"M={iters}, {trials} trials/modulation")
    report("09 PSK cross-confusion with 4-pool", ok, detail)
    assert ok, detail


def test_10_single_receive_antenna():
    """The under-determined Mt=2, Mr=1 case still classifies at 15 dB:
    success rate at least 55%."""
    trials = 200 if FULL else 67  # ~200 records over the 3-pool
    iters = 2000
    config, records = _paired_experiment(
        "fig7_mr1", snr_db=(15.0,), trials=trials, iterations=iters,
        burn_in=int(0.85 * iters))
    overall, per = _accuracy(records, config.pool)
    ok = overall >= 0.55
    detail = (f"success rate {overall:.3f} >= 0.55 "
              f"({', '.join(f'{k}={v:.2f}' for k, v in per.items())}; "
              f"M={iters}, {trials} trials/modulation)")
    report("10 single receive antenna feasibility", ok, detail)
    assert ok, detail


def test_11_byte_identical_reruns(tmp_path):
    """Rerunning a preset with the same base seed writes byte-identical CSVs."""
    preset = replace(load_preset("fig6"), trials=3, iterations=30, burn_in=20,
                     snr_db=(10.0,), workers=1)
    blobs = {}
    for sub in ("a", "b"):
        config = replace(preset, output_dir=str(tmp_path / sub))
        records = run_experiment(config)
        for path in emit_outputs(records, config):
            blobs.setdefault(path.name, []).append(path.read_bytes())
    mismatches = [name for name, pair in blobs.items() if pair[0] != pair[1]]
    ok = not mismatches
    report("11 byte-identical reruns", ok,
           f"{len(blobs)} files compared" + (f"; mismatches: {mismatches}" if mismatches else ""))
    assert ok, mismatches
