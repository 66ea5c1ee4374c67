"""Built-in oracle checks, runnable without pytest via ``modclass selftest``.

Each check compares an implementation path against an independent route
(closed-form moments, explicit least squares, direct density products) and
prints one PASS/FAIL line. Returns exit code 0 when everything passes,
3 otherwise.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import RandomStream, dft_submatrix, digamma, sample_dirichlet, sample_inverse_gamma
from .sigmodel import Scenario, ModulationPool, build_constellation, sigma2_from_snr, synthesize
from .gibbs import (
    InferenceConfig,
    channel_posterior_params,
    gibbs_init,
    pA_posterior_params,
    run_with_restarts,
    symbol_conditional_pmf,
)


def _check_dft() -> bool:
    for N, L in ((4, 2), (8, 3), (64, 5), (128, 5)):
        W = dft_submatrix(N, L).entries
        if not np.allclose(W.conj().T @ W, N * np.eye(L), atol=1e-9):
            return False
    return True


def _check_dirichlet() -> bool:
    rng = RandomStream(7)
    draws = np.array([sample_dirichlet([40.0, 40.0, 40.0], rng) for _ in range(20000)])
    return bool(np.all(np.abs(draws.mean(axis=0) - 1.0 / 3.0) < 0.01))


def _check_inverse_gamma() -> bool:
    rng = RandomStream(8)
    draws = np.array([sample_inverse_gamma(3.0, 4.0, rng) for _ in range(20000)])
    return abs(draws.mean() - 2.0) < 0.05


def _check_digamma() -> bool:
    if abs(digamma(1.0) + 0.5772156649015329) > 1e-10:
        return False
    for x in (0.5, 1.0, 10.0):
        if abs((digamma(x + 1.0) - digamma(x)) - 1.0 / x) > 1e-10:
            return False
    return True


def _small_scenario(snr_db: float = 15.0) -> Scenario:
    return Scenario(N=16, K=2, Mt=2, Mr=2, L=1, tap_powers_db=(0.0,), snr_db=snr_db,
                    pool=ModulationPool.from_names(["QPSK", "PSK8", "QAM16"]),
                    true_modulation="QPSK")


def _check_conjugacy() -> bool:
    scenario = _small_scenario()
    config = InferenceConfig(gamma=5.0, n_iter=10, burn_in=0)
    rng = RandomStream(11)
    for _ in range(50):
        state = gibbs_init(config, scenario, rng.child(rng.gen.integers(1 << 30)))
        counts = np.bincount(state.s_labels.ravel(), minlength=3)
        expected = 5.0 + counts
        if not np.array_equal(pA_posterior_params(state, config), expected):
            return False
    return True


def _check_channel_posterior() -> bool:
    # Compare against the generic Bayesian linear-Gaussian posterior.
    scenario = Scenario(N=4, K=1, Mt=1, Mr=1, L=2, tap_powers_db=(0.0, -3.0), snr_db=20.0,
                        pool=ModulationPool.from_names(["QPSK"]), true_modulation="QPSK")
    config = InferenceConfig(gamma=2.0, n_iter=10, burn_in=0, alpha_h=10.0)
    rng = RandomStream(13)
    _, _, sigma2, y = synthesize(scenario, rng.child(0))
    state = gibbs_init(config, scenario, rng.child(1), y=y)
    state.sigma2 = sigma2
    mean, cov = channel_posterior_params(state, 0, 0, config)
    X = state.s_val[:, 0, 0][:, None] * state.W
    prec = np.eye(2) / config.alpha_h + X.conj().T @ X / sigma2
    cov_ref = np.linalg.inv(prec)
    mean_ref = cov_ref @ (X.conj().T @ y[:, 0, 0]) / sigma2
    return bool(np.allclose(mean, mean_ref, atol=1e-10) and np.allclose(cov, cov_ref, atol=1e-10))


def _check_symbol_pmf() -> bool:
    from .sigmodel import subcarrier_loglik

    scenario = _small_scenario()
    config = InferenceConfig(gamma=5.0, n_iter=10, burn_in=0)
    rng = RandomStream(17)
    _, _, _, y = synthesize(scenario, rng.child(0))
    state = gibbs_init(config, scenario, rng.child(1), y=y)
    state.sigma2 = 0.5
    pmf = symbol_conditional_pmf(state, 3, 1, 0, config)
    cand = state.cand
    freq = state.freq_response()
    ref = np.empty(cand.n_candidates)
    for c in range(cand.n_candidates):
        sv = state.s_val[3, 1].copy()
        sv[0] = cand.values[c]
        loglik = subcarrier_loglik(y[3, 1], sv, freq[3], state.sigma2)
        ref[c] = math.log(state.p_A[cand.labels[c]] / cand.sizes[cand.labels[c]]) + loglik
    ref -= ref.max()
    ref = np.exp(ref)
    ref /= ref.sum()
    return bool(np.allclose(pmf, ref, atol=1e-12))


def _check_decision() -> bool:
    scenario = _small_scenario(snr_db=20.0)
    config = InferenceConfig(gamma=5.0, n_iter=150, burn_in=75, n_runs=2, annealing=True)
    hits = 0
    for t in range(10):
        stream = RandomStream(1000 + t)
        _, _, _, y = synthesize(scenario, stream.child(0))
        result = run_with_restarts(y, scenario, config, stream.child(1))
        hits += result.decision == "QPSK"
    return hits >= 9


def _check_noise_scale() -> bool:
    return abs(sigma2_from_snr(10.0, 2) - 0.2) < 1e-15 and sigma2_from_snr(0.0, 2) == 2.0


def _check_constellations() -> bool:
    for name in ("QPSK", "PSK8", "QAM16", "PSK16"):
        c = build_constellation(name)
        if abs(float(np.mean(np.abs(c.points) ** 2)) - 1.0) > 1e-12:
            return False
    return True


_CHECKS = (
    ("dft orthogonality", _check_dft),
    ("constellation unit power", _check_constellations),
    ("noise variance from SNR", _check_noise_scale),
    ("dirichlet moments", _check_dirichlet),
    ("inverse-gamma moments", _check_inverse_gamma),
    ("digamma identities", _check_digamma),
    ("weight-posterior conjugacy", _check_conjugacy),
    ("channel posterior vs linear-Gaussian oracle", _check_channel_posterior),
    ("symbol conditional pmf vs direct product", _check_symbol_pmf),
    ("high-SNR decision sanity", _check_decision),
)


def run_selftest() -> int:
    failures = 0
    for name, check in _CHECKS:
        try:
            ok = check()
        except Exception as exc:  # a crash is a failure, keep going
            ok = False
            print(f"FAIL {name}: {exc!r}")
            failures += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} self-test(s) failed")
        return 3
    print("all self-tests passed")
    return 0
