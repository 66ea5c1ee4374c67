"""Seeded random streams, prior-family samplers, the truncated DFT matrix,
and the digamma special function.

Everything downstream (signal synthesis, Gibbs sampling, mean-field updates)
builds on the primitives in this module so that a single 64-bit seed pins an
entire experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NumericalError",
    "RandomStream",
    "DftSubmatrix",
    "dft_submatrix",
    "sample_dirichlet",
    "sample_complex_gaussian",
    "sample_inverse_gamma",
    "digamma",
    "shannon_entropy",
]


class NumericalError(RuntimeError):
    """Raised when a numerical operation fails beyond repair (e.g. a
    covariance factorization that stays indefinite after jitter)."""


class RandomStream:
    """Deterministic random source with splittable substreams.

    A stream is identified by a 64-bit ``seed`` plus a tuple of child
    indices (the spawn key). Identical (seed, key) pairs reproduce the
    same draw sequence on any platform; children with distinct keys are
    statistically independent. Streams must not be shared between
    concurrent tasks; spawn a child per task instead.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(i) for i in _spawn_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *indices: int) -> "RandomStream":
        """Derive an independent substream keyed by ``indices``."""
        return RandomStream(self.seed, self.spawn_key + tuple(indices))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, key={self.spawn_key})"


@dataclass(frozen=True)
class DftSubmatrix:
    """First L columns of the size-N DFT matrix.

    entry(n, l) = exp(-2j*pi*n*l/N); columns are orthogonal with
    W^H W = N*I. No 1/sqrt(N) scaling is applied; any unitary rescaling
    is absorbed by the channel prior.
    """

    N: int
    L: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.entries.shape != (self.N, self.L):
            raise ValueError("entries shape does not match (N, L)")


def dft_submatrix(N: int, L: int) -> DftSubmatrix:
    """Build the N x L truncated DFT matrix."""
    if N < 1 or L < 1:
        raise ValueError(f"dimensions must be positive, got N={N}, L={L}")
    if L > N:
        raise ValueError(f"tap count L={L} exceeds subcarrier count N={N}")
    n = np.arange(N)[:, None]
    l = np.arange(L)[None, :]
    entries = np.exp(-2j * np.pi * n * l / N)
    return DftSubmatrix(N=N, L=L, entries=entries)


def sample_dirichlet(params, rng: RandomStream) -> np.ndarray:
    """Draw one probability vector from Dirichlet(params).

    Implemented as normalized independent Gamma draws, which keeps the
    construction testable against closed-form Dirichlet moments.
    """
    params = np.asarray(params, dtype=float)
    if params.ndim != 1 or params.size == 0:
        raise ValueError("params must be a nonempty 1-D vector")
    if np.any(params <= 0) or not np.all(np.isfinite(params)):
        raise ValueError("Dirichlet parameters must be strictly positive")
    g = rng.gen.gamma(shape=params)
    total = g.sum()
    if total <= 0.0:
        # All gamma draws underflowed (only possible for tiny parameters);
        # fall back to the parameter mean direction.
        g = params
        total = params.sum()
    return g / total


def sample_complex_gaussian(mean, cov, rng: RandomStream) -> np.ndarray:
    """Draw one vector from the circularly-symmetric complex Gaussian
    CN(mean, cov).

    cov must be Hermitian positive semidefinite. Real and imaginary parts
    of each component carry half the corresponding diagonal variance. A
    diagonal jitter of 1e-12*trace/d is applied if the Cholesky
    factorization fails; persistent indefiniteness raises NumericalError.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=complex))
    cov = np.asarray(cov, dtype=complex)
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise NumericalError(f"covariance shape {cov.shape} does not match dimension {d}")
    scale = float(np.max(np.abs(cov))) if cov.size else 0.0
    if not np.allclose(cov, cov.conj().T, atol=1e-10 * max(scale, 1.0)):
        raise NumericalError("covariance is not Hermitian")
    if not np.any(cov):
        return mean.copy()
    trace = float(np.real(np.trace(cov)))
    factor = _hermitian_sqrt_factor(cov, trace, d)
    w = rng.gen.standard_normal(d) + 1j * rng.gen.standard_normal(d)
    return mean + factor @ (w / math.sqrt(2.0))


def _hermitian_sqrt_factor(cov: np.ndarray, trace: float, d: int) -> np.ndarray:
    """Return A with A A^H = cov, via Cholesky with jitter fallback."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * trace / d
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(d))
    except np.linalg.LinAlgError:
        pass
    # Singular-but-PSD covariances land here; mild negative eigenvalues are
    # clipped, anything worse is a genuine failure.
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() < -1e-8 * max(eigvals.max(), 1.0):
        raise NumericalError("covariance is indefinite beyond jitter tolerance")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def sample_inverse_gamma(shape: float, scale: float, rng: RandomStream) -> float:
    """Draw one scalar from the inverse-gamma distribution with density
    proportional to z^(-shape-1) * exp(-scale/z).

    Implemented as the reciprocal of a Gamma(shape, rate=scale) draw.
    """
    if shape <= 0 or scale <= 0:
        raise ValueError(f"inverse-gamma parameters must be positive, got ({shape}, {scale})")
    g = rng.gen.gamma(shape, 1.0 / scale)
    if g <= 0.0:
        # Gamma draws can underflow to zero for very small shape parameters.
        g = np.finfo(float).tiny
    return float(1.0 / g)


# Asymptotic expansion coefficients for psi(x): -B_{2n}/(2n), n = 1..6.
_DIGAMMA_SERIES = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
)


def digamma(x: float) -> float:
    """Digamma function psi(x) for x > 0.

    Uses the recurrence psi(x) = psi(x+1) - 1/x to shift the argument to
    x >= 6, then the asymptotic expansion; absolute accuracy is ~1e-12
    for x >= 1e-3.
    """
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    value = 0.0
    while x < 6.0:
        value -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    value += math.log(x) - 0.5 * inv
    inv2 = inv * inv
    term = inv2
    for coeff in _DIGAMMA_SERIES:
        value += coeff * term
        term *= inv2
    return value


def shannon_entropy(p) -> float:
    """Entropy -sum(p*ln(p)) in nats, with 0*ln(0) = 0."""
    p = np.asarray(p, dtype=float)
    mask = p > 0.0
    return float(-np.sum(p[mask] * np.log(p[mask])))
