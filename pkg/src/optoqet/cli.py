"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 model error (no unique stable operating point).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, read_flat
from .estimation import DegenerateRoot, NonPhysicalState
from .gaussian import SingularSystem
from .model import VARIANTS, ModelError, PhysicalParams
from .output import emit
from .sweep import PRESET_NAMES, SweepConfig, evaluate_point, figure_preset, run_sweep

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_MODEL = 3


def _cmd_sweep(args) -> int:
    config = SweepConfig.from_file(args.config)
    changes = {}
    if args.out:
        changes["out_dir"] = args.out
    if args.workers:
        changes["workers"] = args.workers
    if changes:
        config = config.replace(**changes)
    records = run_sweep(config)
    for path in emit(records, config):
        print(path)
    failed = sum(r["status"] != "ok" for r in records)
    if failed:
        print(f"{failed} of {len(records)} points flagged", file=sys.stderr)
    return EXIT_OK


def _cmd_point(args) -> int:
    try:
        params = PhysicalParams().replace(drive=args.E, temperature=args.T, variant=args.variant)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.runs < 1:
        raise ConfigError("runs must be >= 1")
    rec = evaluate_point(params, runs=args.runs, allow_multistable=args.allow_multistable)
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in rec.items()}
    print(json.dumps(clean, indent=2))
    if rec["status"] != "ok":
        print(f"model error: {rec['status']} {rec['flags']}".rstrip(), file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


def _cmd_figure(args) -> int:
    config = figure_preset(args.preset)
    if args.out:
        config = config.replace(out_dir=args.out)
    if args.workers:
        config = config.replace(workers=args.workers)
    records = run_sweep(config)
    for path in emit(records, config):
        print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validate import run_validation

    overrides = {}
    if args.tol_overrides:
        overrides = {k: float(v) for k, v in read_flat(args.tol_overrides).items()}
    try:
        summary = run_validation(overrides, suites=args.suite or None)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    text = json.dumps(summary, indent=2)
    print(text)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n")
    return EXIT_OK if summary["passed"] else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optoqet",
        description="Quantum estimation bounds for optomechanical coupling strengths.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a sweep described by a key = value config file")
    p.add_argument("--config", required=True, help="flat config file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("point", help="evaluate one operating point and print it as JSON")
    p.add_argument("--E", type=float, required=True, help="drive strength, s^-1")
    p.add_argument("--T", type=float, required=True, help="bath temperature, K")
    p.add_argument("--variant", choices=VARIANTS, default="quadratic")
    p.add_argument("--runs", type=int, default=1, help="repetitions M in the error bounds")
    p.add_argument("--allow-multistable", action="store_true", help="pick the smallest |x0| stable root")
    p.set_defaults(func=_cmd_point)

    p = sub.add_parser("figure", help="reproduce a figure panel")
    p.add_argument("preset", choices=PRESET_NAMES)
    p.add_argument("--out", help="output directory (default out/<preset>)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=_cmd_figure)

    p = sub.add_parser("validate", help="run the invariant suites")
    p.add_argument("--tol-overrides", help="key = value file of suite tolerances")
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.add_argument("--json-out", help="also write the summary here")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, matching EXIT_CONFIG
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ModelError, DegenerateRoot, NonPhysicalState, SingularSystem) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
