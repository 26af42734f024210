"""Command-line entry point: grainstore-bench.

Exit codes: 0 success, 1 usage error, 2 consistency violation, 3 output I/O.
"""
from __future__ import annotations

import argparse
import sys

from .bench import (BenchConfig, ConsistencyViolation, EmitError,
                    aggregate_runs, emit, run_benchmark)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would sys.exit(2); the contract wants exit 1 via main()
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="grainstore-bench", add_help=True,
                description="Timed transactional benchmark runner.")
    p.add_argument("--workload", choices=("ycsb", "tpcc"), default="ycsb")
    p.add_argument("--cc", choices=("occ", "tictoc", "2pl", "swisstm",
                                    "adaptive"), default="occ")
    p.add_argument("--granularity", choices=("coarse", "fine"),
                   default="coarse")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--duration-secs", type=float, default=15.0)
    p.add_argument("--runs", type=int, default=7,
                   help="consecutive runs; must be odd (median)")
    p.add_argument("--warehouses", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--num-keys", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--output", default=None,
                   help="output file path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--pin", action="store_true",
                   help="pin worker threads to cpus")
    return p


def parse_config(argv) -> BenchConfig:
    ns = build_parser().parse_args(argv)
    try:
        return BenchConfig(
            workload=ns.workload, cc=ns.cc, granularity=ns.granularity,
            threads=ns.threads, duration_secs=ns.duration_secs, runs=ns.runs,
            warehouses=ns.warehouses, theta=ns.theta, num_keys=ns.num_keys,
            seed=ns.seed, output=ns.output, format=ns.format, pin=ns.pin)
    except ValueError as e:
        raise UsageError(str(e)) from e


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        config = parse_config(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return 1
    try:
        results = [run_benchmark(config) for _ in range(config.runs)]
    except ConsistencyViolation as e:
        print(f"consistency violation: {e}", file=sys.stderr)
        return 2
    summary = aggregate_runs(results)
    summary["config"] = config.echo()
    try:
        emit(summary, config.format, config.output)
    except EmitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
