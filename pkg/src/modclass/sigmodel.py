"""Physical model: constellations, frequency-selective MIMO-OFDM channel and
frame synthesis, and the per-subcarrier Gaussian log-likelihood.

Array shape conventions used throughout the package:

* transmit grid  ``s[n, k, mt]``   complex, shape (N, K, Mt)
* received grid  ``y[n, k, mr]``   complex, shape (N, K, Mr)
* channel taps   ``h[mt, mr, l]``  complex, shape (Mt, Mr, L)
* frequency response ``H[n, mr, mt]`` complex, shape (N, Mr, Mt), where
  ``H[:, mr, mt] = W @ h[mt, mr]`` with W the truncated DFT matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomStream, dft_submatrix

__all__ = [
    "Constellation",
    "ModulationPool",
    "Scenario",
    "ChannelRealization",
    "build_constellation",
    "sigma2_from_snr",
    "normalized_tap_powers",
    "draw_channel",
    "synthesize",
    "subcarrier_loglik",
]

_NAME_ALIASES = {
    "QPSK": "QPSK",
    "4PSK": "QPSK",
    "PSK8": "PSK8",
    "8PSK": "PSK8",
    "QAM16": "QAM16",
    "16QAM": "QAM16",
    "PSK16": "PSK16",
    "16PSK": "PSK16",
}


@dataclass(frozen=True, eq=False)
class Constellation:
    """A named finite symbol alphabet with unit average power."""

    name: str
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("constellation needs a nonempty 1-D point set")
        power = float(np.mean(np.abs(pts) ** 2))
        if abs(power - 1.0) > 1e-12:
            raise ValueError(f"{self.name}: average power {power!r} is not 1")
        # Pairwise distinctness; coincidence across constellations is fine.
        for i in range(pts.size):
            if np.any(np.abs(pts[i + 1:] - pts[i]) < 1e-12):
                raise ValueError(f"{self.name}: duplicate constellation points")

    @property
    def size(self) -> int:
        return int(self.points.size)


def build_constellation(name: str) -> Constellation:
    """Construct one of the supported constellations by name.

    Supported: QPSK, PSK8 (8-PSK), QAM16 (16-QAM), PSK16 (16-PSK), with
    the obvious aliases. PSK alphabets start at angle 0 except QPSK,
    which uses the (+-1 +-1j)/sqrt(2) convention; 16-QAM is the
    {+-1, +-3}^2 grid scaled by 1/sqrt(10).
    """
    key = str(name).upper().replace("-", "").replace("_", "").replace(" ", "")
    canonical = _NAME_ALIASES.get(key)
    if canonical is None:
        raise ValueError(f"unknown constellation {name!r}; supported: QPSK, PSK8, QAM16, PSK16")
    if canonical == "QPSK":
        pts = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2.0)
    elif canonical == "PSK8":
        pts = np.exp(2j * np.pi * np.arange(8) / 8)
    elif canonical == "PSK16":
        pts = np.exp(2j * np.pi * np.arange(16) / 16)
    else:  # QAM16
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
        grid = levels[:, None] + 1j * levels[None, :]
        pts = grid.ravel() / math.sqrt(10.0)
    return Constellation(name=canonical, points=pts)


@dataclass(frozen=True, eq=False)
class ModulationPool:
    """Ordered candidate set of constellations."""

    constellations: tuple[Constellation, ...]

    def __post_init__(self):
        if not self.constellations:
            raise ValueError("modulation pool must be nonempty")
        names = [c.name for c in self.constellations]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate constellation names in pool: {names}")

    @classmethod
    def from_names(cls, names) -> "ModulationPool":
        return cls(tuple(build_constellation(n) for n in names))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.constellations)

    @property
    def total_points(self) -> int:
        """Total candidate symbol count across the pool."""
        return sum(c.size for c in self.constellations)

    def __len__(self) -> int:
        return len(self.constellations)

    def index_of(self, name: str) -> int:
        names = self.names
        if name in names:
            return names.index(name)
        # Fall back to alias resolution for the built-in constellations.
        try:
            target = build_constellation(name).name
        except ValueError:
            target = None
        if target in names:
            return names.index(target)
        raise ValueError(f"{name!r} is not in pool {names}")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Dimensions and physics of one classification problem instance.

    ``L`` is the true channel tap count used for synthesis; ``L_hat`` is
    the tap count the classifier assumes (they differ in channel-length
    mismatch studies).
    """

    N: int
    K: int
    Mt: int
    Mr: int
    L: int
    tap_powers_db: tuple[float, ...]
    snr_db: float
    pool: ModulationPool
    true_modulation: str
    L_hat: int | None = None

    def __post_init__(self):
        if self.L_hat is None:
            object.__setattr__(self, "L_hat", self.L)
        object.__setattr__(self, "tap_powers_db", tuple(float(p) for p in self.tap_powers_db))
        if min(self.K, self.Mt, self.Mr) < 1:
            raise ValueError("K, Mt, Mr must all be >= 1")
        if not (1 <= self.L <= self.N):
            raise ValueError(f"need 1 <= L <= N, got L={self.L}, N={self.N}")
        if not (1 <= self.L_hat <= self.N):
            raise ValueError(f"need 1 <= L_hat <= N, got L_hat={self.L_hat}, N={self.N}")
        if len(self.tap_powers_db) != self.L:
            raise ValueError("tap_powers_db length must equal L")
        self.pool.index_of(self.true_modulation)  # membership check

    @property
    def true_index(self) -> int:
        return self.pool.index_of(self.true_modulation)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Time-domain taps and the derived per-subcarrier frequency response."""

    taps: np.ndarray            # (Mt, Mr, L)
    freq_response: np.ndarray   # (N, Mr, Mt)


def sigma2_from_snr(snr_db: float, Mt: int) -> float:
    """Noise variance from the average SNR definition 10*log10(Mt/sigma^2)."""
    if Mt < 1:
        raise ValueError(f"Mt must be >= 1, got {Mt}")
    return float(Mt / 10.0 ** (snr_db / 10.0))


def normalized_tap_powers(tap_powers_db) -> np.ndarray:
    """Convert a relative dB profile to linear powers summing to 1."""
    p = 10.0 ** (np.asarray(tap_powers_db, dtype=float) / 10.0)
    return p / p.sum()


def freq_response_from_taps(taps: np.ndarray, N: int) -> np.ndarray:
    """Per-subcarrier channel matrices H[n, mr, mt] from taps (Mt, Mr, L)."""
    L = taps.shape[2]
    W = dft_submatrix(N, L).entries
    return np.einsum("nl,trl->nrt", W, taps)


def draw_channel(scenario: Scenario, rng: RandomStream) -> ChannelRealization:
    """Draw normalized Rayleigh fading taps, E[||h_{mt,mr}||^2] = 1.

    Tap l of each antenna pair is CN(0, p_l) with the power profile
    normalized to unit total; taps are independent across (mt, mr, l).
    """
    p = normalized_tap_powers(scenario.tap_powers_db)
    shape = (scenario.Mt, scenario.Mr, scenario.L)
    raw = rng.gen.standard_normal(shape) + 1j * rng.gen.standard_normal(shape)
    taps = raw * np.sqrt(p / 2.0)
    return ChannelRealization(taps=taps, freq_response=freq_response_from_taps(taps, scenario.N))


def synthesize(scenario: Scenario, rng: RandomStream, channel: ChannelRealization | None = None):
    """Generate one coherence frame.

    Returns ``(s, channel, sigma2, y)`` where symbols are i.i.d. uniform
    on the true constellation, noise is i.i.d. CN(0, sigma2*I) across
    subcarriers and OFDM symbols, and y[n,k] = H[n] s[n,k] + z[n,k].
    A fixed ``channel`` may be supplied instead of drawing one.
    """
    const = scenario.pool.constellations[scenario.true_index]
    if channel is None:
        channel = draw_channel(scenario, rng)
    sigma2 = sigma2_from_snr(scenario.snr_db, scenario.Mt)
    shape = (scenario.N, scenario.K, scenario.Mt)
    idx = rng.gen.integers(0, const.size, size=shape)
    s = const.points[idx]
    noise_shape = (scenario.N, scenario.K, scenario.Mr)
    z = rng.gen.standard_normal(noise_shape) + 1j * rng.gen.standard_normal(noise_shape)
    z *= math.sqrt(sigma2 / 2.0)
    y = np.einsum("nrt,nkt->nkr", channel.freq_response, s) + z
    return s, channel, sigma2, y


def subcarrier_loglik(y_nk, s_nk, H_n, sigma2: float) -> float:
    """Gaussian log-likelihood of one received subcarrier vector:
    -Mr*ln(pi*sigma2) - ||y - H s||^2 / sigma2.
    """
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    y_nk = np.asarray(y_nk, dtype=complex)
    resid = y_nk - np.asarray(H_n, dtype=complex) @ np.asarray(s_nk, dtype=complex)
    Mr = y_nk.shape[0]
    return float(-Mr * math.log(math.pi * sigma2) - np.vdot(resid, resid).real / sigma2)
