"""Command-line entry point ``adaptsense``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .harness import ExperimentConfig, emit_coherence, run_and_emit


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptsense", description="Constrained adaptive sensing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="results")
    run.add_argument("--seed", type=_u64, help="override master_seed")
    run.add_argument("--trials", type=_positive, help="override trials")
    run.add_argument("--workers", type=_positive, default=1)

    coh = sub.add_parser("coherence", help="emit coherence tables and the block-removal curve")
    coh.add_argument("--n", type=int, required=True, action="append", help="dimension (repeatable)")
    coh.add_argument("--out", default="results")

    sub.add_parser("validate", help="run the closed-form and Monte Carlo self-checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = ExperimentConfig.from_json(args.config)
            overrides = {}
            if args.seed is not None:
                overrides["master_seed"] = args.seed
            if args.trials is not None:
                overrides["trials"] = args.trials
            if overrides:
                cfg = dataclasses.replace(cfg, **overrides)
            paths = run_and_emit(cfg, args.out, workers=args.workers)
        elif args.command == "coherence":
            cfg = ExperimentConfig("coherence", tuple(args.n))
            paths = emit_coherence(cfg.n, args.out, cfg)
        else:
            from .validation import run_all

            results = run_all()
            for r in results:
                print(r.line())
            return 0 if all(r.passed for r in results) else 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"adaptsense: error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
