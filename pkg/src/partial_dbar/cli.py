"""Command line entry point: ``partial-dbar run --config cfg.txt --test 1 --out results``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import ConfigError, ExperimentConfig, StageError, run_experiment

log = logging.getLogger("partial_dbar")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partial-dbar", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment and write its artifacts")
    r.add_argument("--config", required=True, help="key=value configuration file")
    r.add_argument("--test", type=int, choices=(1, 2), required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = ExperimentConfig.from_file(args.config, test=args.test)
    except (OSError, ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(config, args.out)
    except StageError as err:
        print(f"stage failure: {err}", file=sys.stderr)
        return 1
    for name, ok in report.checks.items():
        log.info("%s %s", "pass" if ok else "FAIL", name)
    if not report.ok:
        failed = [n for n, ok in report.checks.items() if not ok]
        print(f"residual checks failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
