"""Blind modulation classification by Gibbs sampling under a latent
mixture-weight prior.

The unknowns are the mixture weights over candidate constellations, the
transmitted symbol grid, the per-antenna-pair channel taps, and the noise
variance. Each sweep draws the four blocks from their full conditionals;
post-burn-in mixture-weight samples are averaged and the decision is the
argmax of that average. Optional simulated annealing tempers the noise
variance conditional early in the run, and multiple restarts are resolved
by minimum decision entropy.

Symbols live on a joint (point, constellation-label) candidate space:
constellations may share points (the PSK alphabets are nested), so each
symbol carries an explicit label that is sampled together with its value.
The per-constellation counts used by the mixture-weight conditional count
labels, not point membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import (
    RandomStream,
    dft_submatrix,
    sample_complex_gaussian,
    sample_dirichlet,
    sample_inverse_gamma,
    shannon_entropy,
)
from .sigmodel import ModulationPool, Scenario

__all__ = [
    "InferenceConfig",
    "CandidateSet",
    "GibbsState",
    "ChainResult",
    "gibbs_init",
    "label_counts",
    "pA_posterior_params",
    "sample_pA",
    "symbol_conditional_pmf",
    "all_symbol_conditional_pmfs",
    "sample_symbol",
    "channel_posterior_params",
    "sample_channel",
    "annealed_shape",
    "sigma2_posterior_params",
    "sample_sigma2",
    "run_chain",
    "run_with_restarts",
    "select_min_entropy",
]

_VARIANTS = ("latent-dirichlet", "superconstellation")

# Floor applied to superconstellation counts before normalizing, so the
# weight vector stays strictly positive when a constellation has no
# assigned symbols.
_COUNT_FLOOR = 1e-6


@dataclass(frozen=True)
class InferenceConfig:
    """Sampler/optimizer settings shared by all inference methods.

    gamma: Dirichlet pseudo-counts; a scalar is broadcast over the pool,
        None resolves to round(0.08*N*K*Mt) per constellation (0 for the
        superconstellation variant).
    burn_in: discarded prefix of each run; None resolves to
        floor(0.85 * n_iter).
    m0: annealing time constant; None resolves to 0.3 * n_iter.
    switch_iter: iteration at which the hybrid method hands over from
        Gibbs sampling to mean-field updates.
    mf_tol: optional early-stop threshold on the relative free-energy
        change per mean-field sweep (None runs the full budget).
    """

    gamma: float | tuple | None = None
    alpha0: float = 1e-3
    beta0: float = 1e-3
    alpha_h: float = 1e3
    n_iter: int = 2000
    burn_in: int | None = None
    n_runs: int = 1
    annealing: bool = False
    p0: float = 0.1
    m0: float | None = None
    variant: str = "latent-dirichlet"
    switch_iter: int = 9
    mf_tol: float | None = None

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.burn_in is not None and not (0 <= self.burn_in < self.n_iter):
            raise ValueError(f"burn_in must satisfy 0 <= burn_in < n_iter, got {self.burn_in}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if not (0.0 < self.p0 <= 1.0):
            raise ValueError("p0 must lie in (0, 1]")
        if self.m0 is not None and self.m0 <= 0:
            raise ValueError("m0 must be positive")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.switch_iter < 1:
            raise ValueError("switch_iter must be >= 1")
        if self.alpha0 <= 0 or self.beta0 <= 0 or self.alpha_h <= 0:
            raise ValueError("alpha0, beta0, alpha_h must be positive")

    @property
    def effective_burn_in(self) -> int:
        return self.burn_in if self.burn_in is not None else int(0.85 * self.n_iter)

    @property
    def effective_m0(self) -> float:
        return self.m0 if self.m0 is not None else 0.3 * self.n_iter

    def resolve_gamma(self, pool: ModulationPool, N: int, K: int, Mt: int) -> np.ndarray:
        n = len(pool)
        if self.gamma is None:
            base = 0.0 if self.variant == "superconstellation" else float(round(0.08 * N * K * Mt))
            vec = np.full(n, base)
        elif np.isscalar(self.gamma):
            vec = np.full(n, float(self.gamma))
        else:
            vec = np.asarray(self.gamma, dtype=float)
            if vec.shape != (n,):
                raise ValueError(f"gamma length {vec.shape} does not match pool size {n}")
        if self.variant == "latent-dirichlet" and np.any(vec <= 0):
            raise ValueError("gamma must be strictly positive for the latent-dirichlet variant")
        if np.any(vec < 0):
            raise ValueError("gamma must be nonnegative")
        return vec


class CandidateSet:
    """Flattened (point, constellation-label) candidate space of a pool."""

    def __init__(self, pool: ModulationPool):
        self.pool = pool
        values, labels = [], []
        offsets = []
        pos = 0
        for i, const in enumerate(pool.constellations):
            offsets.append(pos)
            values.append(const.points)
            labels.append(np.full(const.size, i, dtype=np.int64))
            pos += const.size
        self.values = np.concatenate(values)
        self.labels = np.concatenate(labels)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.sizes = np.asarray([c.size for c in pool.constellations], dtype=np.int64)
        self.log_inv_size = -np.log(self.sizes[self.labels].astype(float))
        self.abs2 = np.abs(self.values) ** 2
        self.n_candidates = self.values.size
        self.n_constellations = len(pool)


@dataclass
class GibbsState:
    """One joint sample plus the fixed model context it conditions on."""

    p_A: np.ndarray        # (|A|,)
    s_idx: np.ndarray      # (N, K, Mt) candidate indices
    h: np.ndarray          # (Mt, Mr, L_hat)
    sigma2: float
    y: np.ndarray = field(repr=False)       # (N, K, Mr)
    W: np.ndarray = field(repr=False)       # (N, L_hat)
    cand: CandidateSet = field(repr=False)

    @property
    def s_val(self) -> np.ndarray:
        return self.cand.values[self.s_idx]

    @property
    def s_labels(self) -> np.ndarray:
        return self.cand.labels[self.s_idx]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        N, K, Mr = self.y.shape
        Mt = self.s_idx.shape[2]
        return N, K, Mt, Mr

    def freq_response(self) -> np.ndarray:
        """H[n, mr, mt] implied by the current taps."""
        return np.einsum("nl,trl->nrt", self.W, self.h)

    def residual(self, freq: np.ndarray | None = None) -> np.ndarray:
        """y - H s for the current state, shape (N, K, Mr)."""
        if freq is None:
            freq = self.freq_response()
        return self.y - np.einsum("nrt,nkt->nkr", freq, self.s_val)


@dataclass(frozen=True)
class ChainResult:
    """Post-burn-in summary of one run (or of a restart winner)."""

    p_A_mean: np.ndarray
    entropy: float
    decision: str
    decision_index: int
    trace: Optional[dict] = None


def gibbs_init(config: InferenceConfig, scenario: Scenario, rng: RandomStream,
               y: np.ndarray | None = None) -> GibbsState:
    """Draw the initial state from the prior distributions.

    ``y`` attaches the observations the conditionals will use; it defaults
    to zeros so the initializer can be exercised standalone.
    """
    N, K, Mt, Mr = scenario.N, scenario.K, scenario.Mt, scenario.Mr
    pool = scenario.pool
    cand = CandidateSet(pool)
    W = dft_submatrix(N, scenario.L_hat).entries
    gamma = config.resolve_gamma(pool, N, K, Mt)
    if config.variant == "latent-dirichlet":
        p_A = sample_dirichlet(gamma, rng)
    else:
        # gamma = 0 leaves the mixture prior improper; start uniform.
        p_A = np.full(len(pool), 1.0 / len(pool))
    # Symbols: label from the mixture weights, then a uniform point of
    # that constellation.
    shape = (N, K, Mt)
    cdf = np.cumsum(p_A)
    lab = np.minimum(np.searchsorted(cdf, rng.gen.random(shape) * cdf[-1], side="right"),
                     len(pool) - 1)
    pos = np.floor(rng.gen.random(shape) * cand.sizes[lab]).astype(np.int64)
    pos = np.minimum(pos, cand.sizes[lab] - 1)
    s_idx = cand.offsets[lab] + pos
    hshape = (Mt, Mr, scenario.L_hat)
    h = (rng.gen.standard_normal(hshape) + 1j * rng.gen.standard_normal(hshape))
    h *= math.sqrt(config.alpha_h / 2.0)
    sigma2 = sample_inverse_gamma(config.alpha0, config.beta0, rng)
    if y is None:
        y = np.zeros((N, K, Mr), dtype=complex)
    else:
        y = np.asarray(y, dtype=complex)
        if y.shape != (N, K, Mr):
            raise ValueError(f"y shape {y.shape} does not match scenario dims {(N, K, Mr)}")
    return GibbsState(p_A=p_A, s_idx=s_idx, h=h, sigma2=sigma2, y=y, W=W, cand=cand)


def label_counts(state: GibbsState) -> np.ndarray:
    """Per-constellation counts of the current symbol label assignment."""
    return np.bincount(state.s_labels.ravel(), minlength=state.cand.n_constellations).astype(float)


def pA_posterior_params(state: GibbsState, config: InferenceConfig) -> np.ndarray:
    """Dirichlet parameters of the mixture-weight full conditional: gamma + counts."""
    N, K, Mt, _ = state.dims
    gamma = config.resolve_gamma(state.cand.pool, N, K, Mt)
    return gamma + label_counts(state)


def sample_pA(state: GibbsState, config: InferenceConfig, rng: RandomStream) -> np.ndarray:
    """Draw new mixture weights from Dirichlet(gamma + counts), in place."""
    if config.variant != "latent-dirichlet":
        raise ValueError("sample_pA applies to the latent-dirichlet variant only")
    state.p_A = sample_dirichlet(pA_posterior_params(state, config), rng)
    return state.p_A


def _superconstellation_pA(state: GibbsState) -> np.ndarray:
    """Weight update of the counts-normalization variant: p_A = c / sum(c)."""
    c = np.maximum(label_counts(state), _COUNT_FLOOR)
    state.p_A = c / c.sum()
    return state.p_A


def _candidate_logprior(p_A: np.ndarray, cand: CandidateSet) -> np.ndarray:
    return np.log(np.maximum(p_A, 1e-300))[cand.labels] + cand.log_inv_size


def _symbol_block_logweights(state: GibbsState, mt: int, freq: np.ndarray,
                             resid_wo: np.ndarray) -> np.ndarray:
    """Log-weights (N, K, C) of every candidate for antenna mt's symbols.

    resid_wo is the residual with antenna mt's contribution removed;
    freq is the current frequency response (N, Mr, Mt).
    """
    cand = state.cand
    u = np.einsum("nr,nkr->nk", freq[:, :, mt].conj(), resid_wo)
    g = np.sum(np.abs(freq[:, :, mt]) ** 2, axis=1)
    quad = (2.0 * np.real(u[:, :, None] * cand.values.conj()[None, None, :])
            - g[:, None, None] * cand.abs2[None, None, :]) / state.sigma2
    return _candidate_logprior(state.p_A, cand)[None, None, :] + quad


def symbol_conditional_pmf(state: GibbsState, n: int, k: int, mt: int,
                           config: InferenceConfig) -> np.ndarray:
    """Full-conditional pmf of symbol (n, k, mt) over the candidate space.

    Normalized in the log domain with a max shift, so it stays finite at
    arbitrarily small noise variances.
    """
    cand = state.cand
    freq = state.freq_response()
    sv = state.s_val[n, k].copy()
    sv[mt] = 0.0
    r = state.y[n, k] - freq[n] @ sv
    u = np.vdot(freq[n, :, mt], r)
    g = float(np.sum(np.abs(freq[n, :, mt]) ** 2))
    logw = (_candidate_logprior(state.p_A, cand)
            + (2.0 * np.real(u * cand.values.conj()) - g * cand.abs2) / state.sigma2)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def all_symbol_conditional_pmfs(state: GibbsState, config: InferenceConfig) -> np.ndarray:
    """Conditional pmfs of every symbol given the current state, (N, K, Mt, C)."""
    N, K, Mt, _ = state.dims
    freq = state.freq_response()
    resid = state.residual(freq)
    out = np.empty((N, K, Mt, state.cand.n_candidates))
    for mt in range(Mt):
        contrib = np.einsum("nr,nk->nkr", freq[:, :, mt], state.s_val[:, :, mt])
        logw = _symbol_block_logweights(state, mt, freq, resid + contrib)
        logw -= logw.max(axis=-1, keepdims=True)
        w = np.exp(logw)
        out[:, :, mt, :] = w / w.sum(axis=-1, keepdims=True)
    return out


def _draw_categorical_block(p: np.ndarray, rng: RandomStream) -> np.ndarray:
    """Inverse-CDF draw along the last axis of an unnormalized weight array."""
    cdf = np.cumsum(p, axis=-1)
    u = rng.gen.random(p.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = np.sum(cdf < u, axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


def sample_symbol(state: GibbsState, n: int, k: int, mt: int,
                  config: InferenceConfig, rng: RandomStream) -> tuple[complex, int]:
    """Draw symbol (n, k, mt) from its full conditional and update the state.

    Returns the new point and its constellation label.
    """
    pmf = symbol_conditional_pmf(state, n, k, mt, config)
    cdf = np.cumsum(pmf)
    idx = min(int(np.sum(cdf < rng.gen.random() * cdf[-1])), pmf.size - 1)
    state.s_idx[n, k, mt] = idx
    return complex(state.cand.values[idx]), int(state.cand.labels[idx])


def channel_posterior_params(state: GibbsState, mt: int, mr: int,
                             config: InferenceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of the (mt, mr) channel taps.

    Exact form: precision = I/alpha_h + (1/sigma2) W^H D^H D W. The
    prior term keeps the precision invertible even when Mr < Mt.
    """
    W = state.W
    L = W.shape[1]
    s_mt = state.s_val[:, :, mt]
    p_pow = np.sum(np.abs(s_mt) ** 2, axis=1)
    prec = np.eye(L) / config.alpha_h + (W.conj().T * p_pow) @ W / state.sigma2
    freq = state.freq_response()
    resid_wo = (state.y[:, :, mr]
                - np.einsum("nt,nkt->nk", freq[:, mr, :], state.s_val)
                + freq[:, mr, mt][:, None] * s_mt)
    b = W.conj().T @ np.sum(s_mt.conj() * resid_wo, axis=1) / state.sigma2
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.conj().T)
    return cov @ b, cov


def sample_channel(state: GibbsState, mt: int, mr: int,
                   config: InferenceConfig, rng: RandomStream) -> np.ndarray:
    """Draw the (mt, mr) taps from their Gaussian full conditional, in place."""
    mean, cov = channel_posterior_params(state, mt, mr, config)
    state.h[mt, mr] = sample_complex_gaussian(mean, cov, rng)
    return state.h[mt, mr]


def annealed_shape(alpha: float, m: int, config: InferenceConfig) -> float:
    """Iteration-dependent inverse-gamma shape of the annealing schedule:
    alpha' = (1 - (1 - p0) * exp(-m / m0)) * alpha.
    """
    return (1.0 - (1.0 - config.p0) * math.exp(-m / config.effective_m0)) * alpha


def sigma2_posterior_params(state: GibbsState, config: InferenceConfig,
                            m: int = 1) -> tuple[float, float]:
    """Inverse-gamma parameters of the noise-variance full conditional.

    Shape alpha0 + N*K*Mr (annealed when enabled); scale beta0 plus the
    current squared residual norm.
    """
    N, K, _, Mr = state.dims
    alpha = config.alpha0 + N * K * Mr
    if config.annealing:
        alpha = annealed_shape(alpha, m, config)
    resid = state.residual()
    beta = config.beta0 + float(np.sum(np.abs(resid) ** 2))
    return alpha, beta


def sample_sigma2(state: GibbsState, config: InferenceConfig, m: int,
                  rng: RandomStream) -> float:
    """Draw the noise variance from its (possibly annealed) conditional, in place."""
    alpha, beta = sigma2_posterior_params(state, config, m)
    state.sigma2 = sample_inverse_gamma(alpha, beta, rng)
    return state.sigma2


class _ChainCaches:
    """Per-chain constants hoisted out of the sweep loop."""

    def __init__(self, state: GibbsState, config: InferenceConfig):
        N, K, Mt, Mr = state.dims
        self.gamma = config.resolve_gamma(state.cand.pool, N, K, Mt)
        self.Wc = np.ascontiguousarray(state.W.conj().T)
        L = state.W.shape[1]
        self.prior_prec = np.eye(L) / config.alpha_h
        self.alpha_base = config.alpha0 + N * K * Mr


def _draw_gaussian_from_precision(prec: np.ndarray, b: np.ndarray,
                                  rng: RandomStream) -> np.ndarray:
    """Draw from CN(prec^-1 b, prec^-1) via the precision Cholesky factor."""
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.conj().T)
        return sample_complex_gaussian(cov @ b, cov, rng)
    mean = np.linalg.solve(prec, b)
    g = rng.gen.standard_normal((2, b.shape[0]))
    w = (g[0] + 1j * g[1]) * math.sqrt(0.5)
    return mean + np.linalg.solve(chol.conj().T, w)


def _sweep(state: GibbsState, config: InferenceConfig, rng: RandomStream, m: int,
           caches: _ChainCaches | None = None) -> None:
    """One full Gibbs sweep at iteration m, updating the state in place.

    Block order: mixture weights, symbols, channels, noise variance.
    Symbols are updated antenna-by-antenna with all (n, k) positions drawn
    jointly; positions at distinct (n, k) have disjoint likelihood factors,
    so this realizes the same transition kernel as a site-by-site scan.
    """
    N, K, Mt, Mr = state.dims
    cand = state.cand
    if caches is None:
        caches = _ChainCaches(state, config)
    if config.variant == "latent-dirichlet":
        state.p_A = sample_dirichlet(caches.gamma + label_counts(state), rng)
    else:
        _superconstellation_pA(state)
    logprior = _candidate_logprior(state.p_A, cand)

    # Local mirror of the symbol values; state.s_idx stays authoritative and
    # the mirror is refreshed slice-by-slice after each antenna block.
    s_val = state.s_val
    freq = np.einsum("nl,trl->nrt", state.W, state.h)
    resid = state.y - np.einsum("nrt,nkt->nkr", freq, s_val)
    inv_s2 = 1.0 / state.sigma2
    vals_conj = cand.values.conj()[None, None, :]
    abs2 = cand.abs2[None, None, :]
    for mt in range(Mt):
        Hm = freq[:, :, mt]
        resid_wo = resid + Hm[:, None, :] * s_val[:, :, mt][:, :, None]
        u = (Hm.conj()[:, None, :] * resid_wo).sum(axis=2)
        g = (np.abs(Hm) ** 2).sum(axis=1)
        logw = logprior + (2.0 * np.real(u[:, :, None] * vals_conj)
                           - g[:, None, None] * abs2) * inv_s2
        logw -= logw.max(axis=-1, keepdims=True)
        idx = _draw_categorical_block(np.exp(logw), rng)
        state.s_idx[:, :, mt] = idx
        new_vals = cand.values[idx]
        s_val[:, :, mt] = new_vals
        resid = resid_wo - Hm[:, None, :] * new_vals[:, :, None]

    for mr in range(Mr):
        for mt in range(Mt):
            s_mt = s_val[:, :, mt]
            p_pow = (np.abs(s_mt) ** 2).sum(axis=1)
            prec = caches.prior_prec + (caches.Wc * p_pow) @ state.W * inv_s2
            resid_wo = resid[:, :, mr] + freq[:, mr, mt][:, None] * s_mt
            b = caches.Wc @ (s_mt.conj() * resid_wo).sum(axis=1) * inv_s2
            h_new = _draw_gaussian_from_precision(prec, b, rng)
            state.h[mt, mr] = h_new
            fnew = state.W @ h_new
            freq[:, mr, mt] = fnew
            resid[:, :, mr] = resid_wo - fnew[:, None] * s_mt

    alpha = caches.alpha_base
    if config.annealing:
        alpha = annealed_shape(alpha, m, config)
    beta = config.beta0 + float(np.vdot(resid, resid).real)
    state.sigma2 = sample_inverse_gamma(alpha, beta, rng)


def run_chain(y: np.ndarray, scenario: Scenario, config: InferenceConfig,
              rng: RandomStream, trace: str | None = None) -> ChainResult:
    """Run one Gibbs chain and summarize the post-burn-in weight average.

    trace: None, "pA" (store the weight draw of every iteration), or
    "full" (additionally store sigma2, taps, and symbol indices).
    """
    state = gibbs_init(config, scenario, rng, y=y)
    caches = _ChainCaches(state, config)
    M = config.n_iter
    M0 = config.effective_burn_in
    n_pool = len(scenario.pool)
    p_sum = np.zeros(n_pool)
    rec: dict | None = None
    if trace is not None:
        rec = {"p_A": np.empty((M, n_pool))}
        if trace == "full":
            rec["sigma2"] = np.empty(M)
            rec["h"] = np.empty((M,) + state.h.shape, dtype=complex)
            rec["s_idx"] = np.empty((M,) + state.s_idx.shape, dtype=np.int64)
    for m in range(1, M + 1):
        _sweep(state, config, rng, m, caches)
        if m > M0:
            p_sum += state.p_A
        if rec is not None:
            rec["p_A"][m - 1] = state.p_A
            if trace == "full":
                rec["sigma2"][m - 1] = state.sigma2
                rec["h"][m - 1] = state.h
                rec["s_idx"][m - 1] = state.s_idx
    p_mean = p_sum / (M - M0)
    dec = int(np.argmax(p_mean))
    return ChainResult(
        p_A_mean=p_mean,
        entropy=shannon_entropy(p_mean),
        decision=scenario.pool.names[dec],
        decision_index=dec,
        trace=rec,
    )


def select_min_entropy(results: list[ChainResult]) -> ChainResult:
    """Pick the restart with the lowest decision entropy (ties: lowest index)."""
    if not results:
        raise ValueError("no chain results to select from")
    best = min(range(len(results)), key=lambda i: (results[i].entropy, i))
    return results[best]


def run_with_restarts(y: np.ndarray, scenario: Scenario, config: InferenceConfig,
                      rng: RandomStream, trace: str | None = None) -> ChainResult:
    """Run n_runs independent chains and keep the minimum-entropy result."""
    if config.n_runs == 1:
        return run_chain(y, scenario, config, rng, trace=trace)
    results = [run_chain(y, scenario, config, rng.child(i), trace=trace)
               for i in range(config.n_runs)]
    return select_min_entropy(results)
