"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .numerics import NumericalError
from . import selftest as selftest_mod
from .harness import (
    ConfigurationError,
    accuracy_by_modulation,
    confusion_matrix,
    emit_outputs,
    load_config,
    preset_names,
    load_preset,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modclass",
        description="Blind modulation classification experiments for MIMO-OFDM.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file or preset")
    run.add_argument("--config", required=True,
                     help="path to a config file, or a built-in preset name")
    run.add_argument("--workers", type=int, default=None, help="process pool size")
    run.add_argument("--seed", type=int, default=None, help="override base_seed")
    run.add_argument("--method", default=None, help="override the inference method")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument("--trials", type=int, default=None, help="override trials per modulation")
    run.add_argument("--iterations", type=int, default=None, help="override iterations per run")
    run.add_argument("--burn-in", type=int, default=None, dest="burn_in",
                     help="override burn-in count (default: keep the config's fraction)")

    sub.add_parser("presets", help="list built-in scenario presets")
    sub.add_parser("selftest", help="run the built-in numerical self-checks")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.method is not None:
        overrides["method"] = args.method
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
        if args.burn_in is None and config.burn_in is not None:
            # Keep the configured burn-in fraction under the new budget.
            frac = config.burn_in / config.iterations
            overrides["burn_in"] = int(frac * args.iterations)
    if args.burn_in is not None:
        overrides["burn_in"] = args.burn_in
    if overrides:
        config = replace(config, **overrides)

    records = run_experiment(config)
    paths = emit_outputs(records, config)

    print(f"{config.name}: {len(records)} trials, method={config.method}")
    for snr in config.snr_db:
        cell = [r for r in records if r.snr_db == snr]
        if not cell:
            continue
        acc = accuracy_by_modulation(cell, pool_names=config.pool)
        overall = sum(acc.values()) / len(acc)
        per_mod = "  ".join(f"{k}={v:.3f}" for k, v in acc.items())
        print(f"  SNR {snr:g} dB: accuracy {overall:.3f}  ({per_mod})")
        cm = confusion_matrix(cell, pool_names=config.pool)
        diag = "  ".join(f"{n}={v:.3f}" for n, v in zip(cm.names, np.diag(cm.matrix)))
        print(f"    confusion diagonal: {diag}")
    for p in paths:
        print(f"  wrote {p}")
    return 0


def _cmd_presets() -> int:
    for name in preset_names():
        config = load_preset(name)
        dims = (f"N={config.subcarriers} K={config.ofdm_symbols} "
                f"Mt={config.tx_antennas} Mr={config.rx_antennas} L={config.taps}")
        print(f"{name:10s} {dims:32s} snr={list(config.snr_db)} method={config.method}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "presets":
            return _cmd_presets()
        return selftest_mod.run_selftest()
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
