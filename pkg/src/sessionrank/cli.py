"""Command-line entry point.

    sessionrank <stage> --config cfg.json [--seed N] [--out DIR] [--verbose]

Stages: gen-data, train-seq, featurize, train-ranker, evaluate, report.
Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.

The config file is JSON with the RunConfig fields; see the README for the
documented schema. --seed and --out override the config.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from sessionrank.ltr import LayoutError, TrainingError
from sessionrank.pipeline import (
    STAGES,
    ConfigHashError,
    LeakageError,
    PrerequisiteError,
    load_config,
)
from sessionrank.sessionlog import SessionLogError

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sessionrank", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        stage = sub.add_parser(name)
        stage.add_argument("--config", required=True, help="path to the JSON run config")
        stage.add_argument("--seed", type=int, default=None, help="override the config seed")
        stage.add_argument("--out", default=None, help="output directory (overrides config)")
        stage.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        out_dir = args.out or config.out_dir
        if not out_dir:
            print("error: no output directory (--out or config out_dir)", file=sys.stderr)
            return USAGE_EXIT
        STAGES[args.stage](config, out_dir)
        return 0
    except TrainingError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (
        PrerequisiteError,
        ConfigHashError,
        LeakageError,
        SessionLogError,
        LayoutError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
