"""Command-line entry point: ``railfd [--config F] [--seed N] [--out DIR] <command>``.

Errors are reported on stderr as one JSON line, e.g.::

    {"error": "ConfigError", "stage": "config", "message": "..."}

and the process exits with status 2 for configuration errors, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import load_config
from .errors import ConfigError, RailFDError, StageError

COMMANDS = {
    "simulate": "generate the synthetic fleet (WLC1 files + manifest)",
    "prep": "concatenate, resample and load-normalise every measurement",
    "train": "train the wheel encoder with temporal triplet mining",
    "fit-occ": "fit the one-class SVM on encoded training signals",
    "fit-helm": "fit the HELM baseline on prepared training signals",
    "score": "write per-measurement health series of the test wheels",
    "detect": "apply the median-of-window rule (and the ensemble)",
    "evaluate": "write report.json and report.txt",
    "run": "full pipeline for the configured task",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="railfd", description="Contrastive fault detection on wayside wheel-load data.")
    parser.add_argument("--config", help="JSON experiment config (unknown keys are errors)")
    parser.add_argument("--seed", type=int, help="unsigned 64-bit seed; overrides the config")
    parser.add_argument("--out", help="run directory; overrides config output_dir")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        if name == "run":
            p.add_argument("--plots", action="store_true", help="also write SVG health-series plots (needs matplotlib)")
    return parser


def _error(kind: str, stage: str, message: str, status: int) -> int:
    print(json.dumps({"error": kind, "stage": stage, "message": message}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
    except RailFDError as exc:
        return _error(type(exc).__name__, "config", str(exc), 2)
    try:
        if args.command == "run":
            report = pipeline.run_pipeline(cfg, plots=args.plots)
            from .evaluation import format_text

            print(format_text(report), end="")
        else:
            if cfg.task != "wheel-unsupervised":
                raise ConfigError(f"`{args.command}` applies to the wheel task; use `run` for {cfg.task}")
            result = pipeline.run_stage(cfg, args.command)
            if args.command == "evaluate":
                from .evaluation import format_text

                print(format_text(result), end="")
    except StageError as exc:
        status = 2 if isinstance(exc.cause, ConfigError) else 1
        return _error(type(exc.cause).__name__, exc.stage, str(exc.cause), status)
    except ConfigError as exc:
        return _error("ConfigError", args.command, str(exc), 2)
    except RailFDError as exc:
        return _error(type(exc).__name__, args.command, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
