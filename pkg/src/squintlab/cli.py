"""
Command-line entry point: ``squintlab <experiment> --config <path> [--seed N] [--out <path>] [--trials N]``.

Results go to ``--out`` (or the config's ``output``), as JSON when the path
ends in ``.json`` and CSV otherwise; with neither, CSV is printed.  Failures
exit nonzero after printing one JSON line ``{"error": ..., "message": ...}``
to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .harness import (EXPERIMENTS, ConfigError, ExperimentError, emit_csv, emit_json, parse_config,
                      run_experiment)

EXIT_USAGE, EXIT_CONFIG, EXIT_RUN, EXIT_IO = 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, EXIT_USAGE)


def _fail(kind: str, message: str, code: int, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    raise SystemExit(code)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="squintlab", description="Run a wideband beam-squint experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the config trial count")
    p.add_argument("--out", help="output path (.json for JSON, otherwise CSV)")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        _fail("io", str(exc), EXIT_IO, path=args.config)
    try:
        spec = parse_config(text, experiment=args.experiment)
        overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials), ("output", args.out))
                     if v is not None}
        spec = dataclasses.replace(spec, **overrides)
    except ConfigError as exc:
        _fail("config", str(exc), EXIT_CONFIG, field=exc.field)
    if args.workers < 1:
        _fail("usage", "--workers must be >= 1", EXIT_USAGE)
    try:
        result = run_experiment(spec, workers=args.workers)
    except ExperimentError as exc:
        _fail("run", str(exc), EXIT_RUN, trial=exc.trial)
    out = spec.output or None
    try:
        if out is not None and out.endswith(".json"):
            emit_json(result, out)
        else:
            text = emit_csv(result, out)
            if out is None:
                sys.stdout.write(text)
    except OSError as exc:
        _fail("io", str(exc), EXIT_IO, path=out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
