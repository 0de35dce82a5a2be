"""Command line entry point: ``solve <config>``, ``suite <name>``, ``suites``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, describe_regime, load_config
from .scenario import EXIT_FAIL, run_scenario_full
from .suites import SUITES, list_suites, run_suite

THREADS_ENV = "DEGDIFF_THREADS"


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logging.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degdiff", description="Regularized degenerate diffusion experiments.")
    ap.add_argument("--output-dir", default=None, help="where results are written")
    ap.add_argument("--threads", type=int, default=None, help=f"worker threads (overrides ${THREADS_ENV})")
    ap.add_argument("--stride", type=int, default=None, help="snapshot stride (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run a JSON scenario")
    s.add_argument("config")
    s = sub.add_parser("suite", help="run a canned acceptance suite")
    s.add_argument("name")
    sub.add_parser("suites", help="list acceptance suites")
    return ap


def _print_verdicts(verdicts):
    for v in verdicts:
        meas = "" if v.measured is None else f" measured={v.measured:.6g}"
        print(f"  [{v.status}] {v.name}{meas}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = _threads(args.threads)
    if args.stride is not None and args.stride < 1:
        print("error: --stride must be >= 1", file=sys.stderr)
        return EXIT_FAIL

    if args.command == "suites":
        for name in list_suites():
            print(name)
        return 0

    if args.command == "suite":
        if args.name not in SUITES:
            print(f"error: unknown suite {args.name!r}; valid names: {', '.join(SUITES)}", file=sys.stderr)
            return EXIT_FAIL
        try:
            res = run_suite(args.name, args.output_dir or ".", threads)
        except (ValueError, RuntimeError) as exc:
            print(f"error: suite {args.name} failed: {exc}", file=sys.stderr)
            return EXIT_FAIL
        for row in res.table[:40]:
            print("  " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        _print_verdicts(res.verdicts)
        for k, e in res.errors.items():
            print(f"  [error] {k}: {e}")
        print(f"suite {args.name}: exit {res.exit_code}")
        return res.exit_code

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.stride is not None:
        cfg.stride = args.stride
    print(describe_regime(cfg))
    try:
        res = run_scenario_full(cfg, args.output_dir, threads)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _print_verdicts(res.verdicts)
    for k, e in res.errors.items():
        print(f"  [error] {k}: {e}")
    print(f"exit {res.exit_code}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
