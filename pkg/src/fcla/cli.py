"""Command line entry point: ``fcla run`` and ``fcla validate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, validate
from .geometry import InfeasibleConfigError
from .orchestrator import MonteCarloReport, monte_carlo

log = logging.getLogger("fcla")

AXIS_COLUMNS = {"radius": "R", "snr_db": "SNR_dB", "num_paths": "L",
                "num_users": "K", "layer_spacing": "layer_spacing"}

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def fmt(x) -> str:
    return f"{x:.12g}"


def _sort_key(value):
    return (0, value) if value is not None else (1, 0)


def write_trace_csv(report: MonteCarloReport, path: Path, length: int) -> None:
    """Mean sum rate per outer iteration for every (sweep value, variant)."""
    axis_col = AXIS_COLUMNS.get(report.axis) if report.axis else None
    header = ([axis_col] if axis_col else []) + ["iteration", "variant", "mean_sum_rate"]
    rows = []
    for (value, variant), summary in report.summaries.items():
        if not summary.trials:
            continue
        for i, rate in enumerate(summary.mean_trace(length)):
            rows.append((value, variant.value, i, rate))
    rows.sort(key=lambda r: (_sort_key(r[0]), r[1], r[2]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for value, variant, i, rate in rows:
            w.writerow(([fmt(value)] if axis_col else []) + [i, variant, fmt(rate)])


def write_final_csv(report: MonteCarloReport, path: Path) -> None:
    axis_col = AXIS_COLUMNS.get(report.axis) if report.axis else None
    header = ([axis_col] if axis_col else []) + ["variant", "final_mean_sum_rate", "samples"]
    rows = sorted(
        ((value, variant.value, s.final_mean, s.sample_count)
         for (value, variant), s in report.summaries.items()),
        key=lambda r: (_sort_key(r[0]), r[1]),
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for value, variant, mean, n in rows:
            w.writerow(([fmt(value)] if axis_col else []) + [variant, fmt(mean), n])


def run_file(config: ExperimentConfig, report: MonteCarloReport, length: int) -> dict:
    results = []
    for (value, variant), s in report.summaries.items():
        results.append({
            "sweep_value": value,
            "variant": variant.value,
            "mean_sum_rate": s.mean_trace(length).tolist() if s.trials else [],
            "final_mean_sum_rate": s.final_mean if s.trials else None,
            "trials": [
                {
                    "seed": t.seed,
                    "scenario_hash": t.scenario_hash,
                    "sum_rate": t.trace.sum_rate,
                    "lagrangian": t.trace.lagrangian,
                    "lambda": t.trace.lam,
                    "layout_hash": t.trace.layout_hash,
                    "final_layout": t.final_layout.to_dict(),
                }
                for t in s.trials
            ],
            "failures": [{"seed": seed, "error": msg} for seed, msg in s.failures],
        })
    return {
        "config": config.to_dict(),
        "sweep_axis": report.axis,
        "seeds": report.seeds,
        "results": results,
    }


def cmd_run(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    errors, warnings = validate(config)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if errors or warnings:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    e = config.experiment
    out = Path(e.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = monte_carlo(config.system_setup(), e.variants, e.trials, e.seed,
                             config.solver_options(), config.sweep(), jobs=e.jobs)
    except InfeasibleConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    length = config.solver.max_outer_iterations + 1
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(run_file(config, report, length), fh, indent=1)
    write_trace_csv(report, out / "trace.csv", length)
    write_final_csv(report, out / "final.csv")
    print(f"wrote {out / 'run.json'}, {out / 'trace.csv'}, {out / 'final.csv'}")

    failures = [(s.sweep_value, s.variant.value, seed, msg)
                for s in report.summaries.values() for seed, msg in s.failures]
    if failures:
        for value, variant, seed, msg in failures:
            print(f"numerical failure: variant={variant} sweep={value} seed={seed}: {msg}",
                  file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def cmd_validate(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"error: {p}")
        return 1
    errors, warnings = validate(config)
    for e in errors:
        print(f"error: {e}")
    for w in warnings:
        print(f"warning: {w}")
    if not errors and not warnings:
        print("OK")
    return 1 if errors else 0


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    for flag, key in (("seed", "experiment.seed"), ("trials", "experiment.trials"),
                      ("jobs", "experiment.jobs"), ("out", "experiment.out")):
        value = getattr(args, flag, None)
        if value is not None:
            config.set(key, value, parse=False)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError([f"--set {item!r}: expected key=value"])
        key, value = item.split("=", 1)
        config.set(key.strip(), value)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcla",
        description="Sum-rate optimisation for flexible cylindrical arrays with movable antennas.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file (defaults: baseline experiment)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config value, e.g. array.radius=0.04")

    run = sub.add_parser("run", parents=[common], help="run the Monte Carlo experiment")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", parents=[common], help="check a config without running")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
