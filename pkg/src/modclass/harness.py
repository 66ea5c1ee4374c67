"""Experiment orchestration: config ingestion, seeded Monte Carlo trials over
SNR grids, aggregation into accuracy curves and confusion matrices, and
CSV/SVG emission.

Trials are independent work items seeded by a splittable key
(base_seed, snr index, modulation index, trial index), so parallel and
serial execution produce identical outputs and any subset of trials can be
reproduced in isolation.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .numerics import RandomStream
from .sigmodel import ModulationPool, Scenario, synthesize
from .gibbs import ChainResult, InferenceConfig, run_with_restarts
from .meanfield import hybrid_run, mf_run

__all__ = [
    "ConfigurationError",
    "EmptyDataError",
    "ExperimentConfig",
    "TrialRecord",
    "ConfusionMatrix",
    "METHODS",
    "parse_config_text",
    "config_to_text",
    "load_config",
    "preset_names",
    "load_preset",
    "build_inference",
    "classify",
    "run_experiment",
    "confusion_matrix",
    "accuracy_by_modulation",
    "emit_outputs",
]


class ConfigurationError(ValueError):
    """Invalid experiment configuration (bad key, value, or combination)."""


class EmptyDataError(ValueError):
    """An aggregation was asked to summarize zero records."""


METHODS = (
    "gibbs",
    "gibbs+restarts",
    "gibbs+annealing",
    "gibbs+restarts+annealing",
    "meanfield",
    "hybrid",
    "superconstellation",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a scenario family swept over an SNR grid.

    ``runs`` feeds the restart count of restart-based methods;
    ``annealing`` applies only to the superconstellation method (the
    gibbs+... method names pin annealing explicitly).
    """

    name: str
    subcarriers: int
    ofdm_symbols: int
    tx_antennas: int
    rx_antennas: int
    taps: int
    tap_powers_db: tuple[float, ...]
    snr_db: tuple[float, ...]
    pool: tuple[str, ...]
    method: str = "gibbs+restarts+annealing"
    trials: int = 500
    base_seed: int = 20240601
    output_dir: str = "out"
    workers: int = 1
    assumed_taps: int | None = None
    iterations: int = 2000
    burn_in: int | None = None
    runs: int = 5
    gamma: float | None = None
    alpha0: float = 1e-3
    beta0: float = 1e-3
    alpha_h: float = 1e3
    p0: float = 0.1
    m0: float | None = None
    annealing: bool = True
    switch_iter: int = 9

    def __post_init__(self):
        object.__setattr__(self, "tap_powers_db", tuple(float(x) for x in self.tap_powers_db))
        object.__setattr__(self, "snr_db", tuple(float(x) for x in self.snr_db))
        object.__setattr__(self, "pool", tuple(str(x) for x in self.pool))
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; valid: {METHODS}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not self.snr_db:
            raise ConfigurationError("snr_db grid must be nonempty")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def scenario(self, snr_db: float, true_modulation: str) -> Scenario:
        pool = ModulationPool.from_names(self.pool)
        try:
            return Scenario(
                N=self.subcarriers, K=self.ofdm_symbols,
                Mt=self.tx_antennas, Mr=self.rx_antennas,
                L=self.taps, L_hat=self.assumed_taps,
                tap_powers_db=self.tap_powers_db, snr_db=snr_db,
                pool=pool, true_modulation=true_modulation,
            )
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one synthesized-and-classified frame."""

    trial_id: str
    seed: str
    snr_db: float
    method: str
    true_modulation: str
    decision: str
    p_A_mean: tuple[float, ...]
    entropy: float
    wall_time_s: float


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-normalized decision probabilities; rows actual, columns estimated."""

    names: tuple[str, ...]
    matrix: np.ndarray

    def accuracy(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


# ---------------------------------------------------------------------------
# Configuration files: flat "key = value" lines, '#' comments, comma lists.

_INT_KEYS = {"subcarriers", "ofdm_symbols", "tx_antennas", "rx_antennas", "taps",
             "assumed_taps", "trials", "base_seed", "workers", "iterations",
             "burn_in", "runs", "switch_iter"}
_FLOAT_KEYS = {"gamma", "alpha0", "beta0", "alpha_h", "p0", "m0"}
_FLOAT_LIST_KEYS = {"tap_powers_db", "snr_db"}
_STR_LIST_KEYS = {"pool"}
_STR_KEYS = {"name", "method", "output_dir"}
_BOOL_KEYS = {"annealing"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _FLOAT_LIST_KEYS | _STR_LIST_KEYS | _STR_KEYS | _BOOL_KEYS
_REQUIRED_KEYS = {"name", "subcarriers", "ofdm_symbols", "tx_antennas", "rx_antennas",
                  "taps", "tap_powers_db", "snr_db", "pool"}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _FLOAT_LIST_KEYS:
            return tuple(float(t) for t in raw.split(",") if t.strip())
        if key in _STR_LIST_KEYS:
            return tuple(t.strip() for t in raw.split(",") if t.strip())
        if key in _BOOL_KEYS:
            word = raw.strip().lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.strip()
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key!r}: {raw!r} ({exc})") from exc


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat key = value experiment-config format."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    missing = _REQUIRED_KEYS - values.keys()
    if missing:
        raise ConfigurationError(f"missing required keys: {sorted(missing)}")
    return ExperimentConfig(**values)


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize a config to the flat file format (round-trip exact)."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name in _FLOAT_LIST_KEYS:
            rendered = ", ".join(repr(v) for v in value)
        elif f.name in _STR_LIST_KEYS:
            rendered = ", ".join(value)
        elif f.name in _BOOL_KEYS:
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def _presets_dir() -> Path:
    return Path(__file__).parent / "presets"


def preset_names() -> list[str]:
    return sorted(p.stem for p in _presets_dir().glob("*.cfg"))


def load_preset(name: str) -> ExperimentConfig:
    path = _presets_dir() / f"{name}.cfg"
    if not path.is_file():
        raise ConfigurationError(f"unknown preset {name!r}; available: {preset_names()}")
    return parse_config_text(path.read_text())


def load_config(path_or_preset: str) -> ExperimentConfig:
    """Load a config from a file path, or by built-in preset name."""
    path = Path(path_or_preset)
    if path.is_file():
        return parse_config_text(path.read_text())
    if path.suffix or "/" in path_or_preset:
        raise ConfigurationError(f"config file not found: {path_or_preset}")
    return load_preset(path_or_preset)


# ---------------------------------------------------------------------------
# Trial execution.

def build_inference(config: ExperimentConfig) -> InferenceConfig:
    """Resolve the method string into sampler settings."""
    method = config.method
    variant = "superconstellation" if method == "superconstellation" else "latent-dirichlet"
    if method == "gibbs":
        n_runs, annealing = 1, False
    elif method == "gibbs+restarts":
        n_runs, annealing = config.runs, False
    elif method == "gibbs+annealing":
        n_runs, annealing = 1, True
    elif method == "gibbs+restarts+annealing":
        n_runs, annealing = config.runs, True
    elif method == "superconstellation":
        n_runs, annealing = config.runs, config.annealing
    else:  # meanfield, hybrid
        n_runs, annealing = 1, False
    try:
        return InferenceConfig(
            gamma=config.gamma, alpha0=config.alpha0, beta0=config.beta0,
            alpha_h=config.alpha_h, n_iter=config.iterations, burn_in=config.burn_in,
            n_runs=n_runs, annealing=annealing, p0=config.p0, m0=config.m0,
            variant=variant, switch_iter=config.switch_iter,
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def classify(y: np.ndarray, scenario: Scenario, inference: InferenceConfig,
             method: str, rng: RandomStream) -> ChainResult:
    """Run the configured inference method on one received frame."""
    if method == "meanfield":
        return mf_run(y, scenario, inference)
    if method == "hybrid":
        return hybrid_run(y, scenario, inference, rng)
    return run_with_restarts(y, scenario, inference, rng)


def _run_trial(config: ExperimentConfig, si: int, mi: int, ti: int) -> TrialRecord:
    snr = config.snr_db[si]
    true_mod = config.pool[mi]
    scenario = config.scenario(snr, true_mod)
    inference = build_inference(config)
    stream = RandomStream(config.base_seed).child(si, mi, ti)
    started = time.perf_counter()
    _, _, _, y = synthesize(scenario, stream.child(0))
    result = classify(y, scenario, inference, config.method, stream.child(1))
    elapsed = time.perf_counter() - started
    return TrialRecord(
        trial_id=f"{si}/{mi}/{ti}",
        seed=f"{config.base_seed}/{si}/{mi}/{ti}",
        snr_db=snr,
        method=config.method,
        true_modulation=scenario.pool.names[mi],
        decision=result.decision,
        p_A_mean=tuple(float(p) for p in result.p_A_mean),
        entropy=float(result.entropy),
        wall_time_s=elapsed,
    )


def _trial_star(args) -> TrialRecord:
    return _run_trial(*args)


def resolve_workers(config: ExperimentConfig) -> int:
    env = os.environ.get("MODCLASS_WORKERS")
    if env is not None:
        try:
            count = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"MODCLASS_WORKERS must be an integer, got {env!r}") from exc
        if count < 1:
            raise ConfigurationError("MODCLASS_WORKERS must be >= 1")
        return count
    return config.workers


def run_experiment(config: ExperimentConfig) -> list[TrialRecord]:
    """Run every (SNR point, modulation, trial) cell of the experiment.

    Records come back in deterministic (snr, modulation, trial) order
    regardless of the worker count.
    """
    # Validate the full scenario grid before spending any compute.
    inference = build_inference(config)
    for snr in config.snr_db:
        for name in config.pool:
            config.scenario(snr, name)
    if inference.effective_burn_in >= inference.n_iter:
        raise ConfigurationError("burn-in leaves no samples to average")
    tasks = [(config, si, mi, ti)
             for si in range(len(config.snr_db))
             for mi in range(len(config.pool))
             for ti in range(config.trials)]
    workers = resolve_workers(config)
    if workers == 1 or len(tasks) == 1:
        return [_trial_star(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_star, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# Aggregation.

def _ordered_names(records: list[TrialRecord], pool_names) -> tuple[str, ...]:
    if pool_names is not None:
        return tuple(pool_names)
    seen: list[str] = []
    for r in records:
        if r.true_modulation not in seen:
            seen.append(r.true_modulation)
    return tuple(seen)


def confusion_matrix(records: list[TrialRecord], pool_names=None) -> ConfusionMatrix:
    """Empirical decision probabilities from one (SNR, method) cell."""
    if not records:
        raise EmptyDataError("cannot build a confusion matrix from zero records")
    names = _ordered_names(records, pool_names)
    index = {n: i for i, n in enumerate(names)}
    counts = np.zeros((len(names), len(names)))
    for r in records:
        counts[index[r.true_modulation], index[r.decision]] += 1
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        empty = [n for n, t in zip(names, totals[:, 0]) if t == 0]
        raise EmptyDataError(f"no trials recorded for: {empty}")
    return ConfusionMatrix(names=names, matrix=counts / totals)


def accuracy_by_modulation(records: list[TrialRecord], pool_names=None) -> dict[str, float]:
    """Fraction of correct decisions per true modulation."""
    if not records:
        raise EmptyDataError("no records to aggregate")
    names = _ordered_names(records, pool_names)
    out = {}
    for name in names:
        cell = [r for r in records if r.true_modulation == name]
        if cell:
            out[name] = sum(r.decision == r.true_modulation for r in cell) / len(cell)
    return out


# ---------------------------------------------------------------------------
# Output files. All numeric output uses 6 significant digits, '.' decimal
# separator, and '\n' line endings so reruns are byte-identical.

def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def emit_outputs(records: list[TrialRecord], config: ExperimentConfig) -> list[Path]:
    """Write trials.csv, accuracy_vs_snr.csv, per-SNR confusion CSVs, and an
    SVG accuracy chart into config.output_dir. Returns the written paths.

    Wall times stay in the in-memory records only; the files must be
    byte-deterministic under reruns of the same seed.
    """
    if not records:
        raise EmptyDataError("no records to emit")
    outdir = Path(config.output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc
    names = tuple(ModulationPool.from_names(config.pool).names)
    written: list[Path] = []

    lines = ["trial_id,seed,snr_db,method,true_modulation,decision,entropy,"
             + ",".join(f"p_mean_{n}" for n in names)]
    for r in records:
        lines.append(",".join([
            r.trial_id, r.seed, _fmt(r.snr_db), r.method, r.true_modulation,
            r.decision, _fmt(r.entropy), *(_fmt(p) for p in r.p_A_mean),
        ]))
    written.append(_write(outdir / "trials.csv", lines))

    acc_lines = ["snr_db,method,modulation,accuracy,trials"]
    series: dict[str, list[tuple[float, float]]] = {n: [] for n in names}
    series["ALL"] = []
    for snr in config.snr_db:
        cell = [r for r in records if r.snr_db == snr]
        if not cell:
            continue
        accs = []
        for mi, name in enumerate(names):
            sub = [r for r in cell if r.true_modulation == name]
            if not sub:
                continue
            acc = sum(r.decision == r.true_modulation for r in sub) / len(sub)
            acc_lines.append(f"{_fmt(snr)},{config.method},{name},{_fmt(acc)},{len(sub)}")
            series[name].append((snr, acc))
            accs.append(acc)
        overall = sum(accs) / len(accs)
        acc_lines.append(f"{_fmt(snr)},{config.method},ALL,{_fmt(overall)},{len(cell)}")
        series["ALL"].append((snr, overall))
    written.append(_write(outdir / "accuracy_vs_snr.csv", acc_lines))

    col_index = {n: j for j, n in enumerate(names)}
    for snr in config.snr_db:
        cell = [r for r in records if r.snr_db == snr]
        if not cell:
            continue
        # Rows are restricted to modulations actually present in the cell;
        # columns always span the full pool.
        cm_lines = ["actual," + ",".join(names)]
        for name in names:
            sub = [r for r in cell if r.true_modulation == name]
            if not sub:
                continue
            row = np.zeros(len(names))
            for r in sub:
                row[col_index[r.decision]] += 1
            row /= row.sum()
            cm_lines.append(name + "," + ",".join(_fmt(v) for v in row))
        written.append(_write(outdir / f"confusion_{format(snr, 'g')}.csv", cm_lines))

    written.append(_write_svg(outdir / "accuracy_vs_snr.svg", series, config))
    return written


def _write(path: Path, lines: list[str]) -> Path:
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _write_svg(path: Path, series: dict[str, list[tuple[float, float]]],
               config: ExperimentConfig) -> Path:
    """Minimal deterministic line chart of accuracy versus SNR."""
    width, height = 640, 420
    ml, mr_, mt_, mb = 60, 150, 30, 50
    xs = sorted({x for pts in series.values() for x, _ in pts})
    if not xs:
        xs = [0.0]
    x_lo, x_hi = min(xs), max(xs)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0

    def sx(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr_)

    def sy(y: float) -> float:
        return height - mb - y * (height - mt_ - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="18" text-anchor="middle" font-size="14">'
        f'{config.name}: accuracy vs SNR ({config.method})</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        parts.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{width - mr_}" y2="{y:.1f}" '
                     'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">'
                     f'{format(frac, "g")}</text>')
    for x in xs:
        parts.append(f'<text x="{sx(x):.1f}" y="{height - mb + 18}" text-anchor="middle" '
                     f'font-size="11">{format(x, "g")}</text>')
    parts.append(f'<line x1="{ml}" y1="{sy(0):.1f}" x2="{width - mr_}" y2="{sy(0):.1f}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{ml}" y1="{sy(0):.1f}" x2="{ml}" y2="{sy(1):.1f}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<text x="{(ml + width - mr_) // 2}" y="{height - 12}" text-anchor="middle" '
                 'font-size="12">SNR (dB)</text>')
    for i, (label, pts) in enumerate(series.items()):
        if not pts:
            continue
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        dash = ' stroke-dasharray="6,3"' if label == "ALL" else ""
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="2"{dash}/>')
        for x, y in pts:
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
        ly = mt_ + 16 + 16 * i
        parts.append(f'<line x1="{width - mr_ + 10}" y1="{ly - 4}" x2="{width - mr_ + 34}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
        parts.append(f'<text x="{width - mr_ + 40}" y="{ly}" font-size="11">{label}</text>')
    parts.append("</svg>")
    path.write_bytes("\n".join(parts).encode("ascii"))
    return path
