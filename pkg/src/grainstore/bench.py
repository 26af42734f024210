"""Timed multi-thread benchmark runner over the workload bodies.

Protocol per run: build a fresh engine, load the workload, start the
worker threads, let them spin through a warm-up that is not tallied,
then measure for duration_secs against a shared stop flag.
Abort accounting is per-attempt: every aborted attempt counts once, so
committed + sum(aborts) == attempts for each run.
"""
from __future__ import annotations

import csv
import gc
import io
import json
import os
import statistics
import sys
import threading
import time
from dataclasses import dataclass

from .engine import Engine
from .words import PolicyId
from .workloads import (TpccConfig, TpccGen, TpccLayout, YcsbConfig, YcsbGen,
                        YcsbLayout, consistency_check, run_one, tpcc_load,
                        ycsb_load, ycsb_txn)

# Interpreter and allocator caches take most of a second to settle at
# desk scale; measuring inside the ramp makes short runs over-read it.
WARMUP_SECS = 1.0
# The default 5 ms GIL timeslice exceeds a whole transaction and hides
# interleavings; 1 ms forces bodies to overlap while keeping mid-body
# stalls (a parked thread waits out everyone else's slice) shorter than
# the transactions themselves.
SWITCH_INTERVAL = 1e-3

POLICIES = {
    "occ": PolicyId.OCC,
    "tictoc": PolicyId.TICTOC,
    "2pl": PolicyId.TWO_PL,
    "swisstm": PolicyId.SWISSTM,
    "adaptive": PolicyId.ADAPTIVE,
}


class ConsistencyViolation(Exception):
    """A post-run consistency condition failed; carries the failing names."""


class EmitError(Exception):
    """Output could not be written; message includes the path."""


@dataclass(frozen=True)
class BenchConfig:
    workload: str = "ycsb"
    cc: str = "occ"
    granularity: str = "coarse"
    threads: int = 1
    duration_secs: float = 15.0
    runs: int = 7
    warehouses: int = 1
    theta: float = 0.9
    num_keys: int = 100_000
    seed: int = 1
    output: str | None = None
    format: str = "json"
    pin: bool = False
    # test-speed knobs (not CLI flags); None keeps the workload defaults
    tpcc_customers: int | None = None
    tpcc_items: int | None = None

    def __post_init__(self):
        if self.workload not in ("ycsb", "tpcc"):
            raise ValueError(f"unknown workload {self.workload!r}")
        if self.cc not in POLICIES:
            raise ValueError(f"unknown cc {self.cc!r}")
        if self.granularity not in ("coarse", "fine"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.duration_secs <= 0:
            raise ValueError("duration_secs must be > 0")
        if self.runs < 1 or self.runs % 2 == 0:
            raise ValueError("runs must be odd so the median is well-defined")
        if self.warehouses < 1:
            raise ValueError("warehouses must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")

    @property
    def policy(self) -> PolicyId:
        return POLICIES[self.cc]

    def echo(self) -> dict:
        """The semantic fields, for embedding in output."""
        return {
            "workload": self.workload, "cc": self.cc,
            "granularity": self.granularity, "threads": self.threads,
            "duration_secs": self.duration_secs, "runs": self.runs,
            "warehouses": self.warehouses, "theta": self.theta,
            "num_keys": self.num_keys, "seed": self.seed, "pin": self.pin,
        }


@dataclass
class RunMetrics:
    committed: int
    attempts: int
    throughput: float  # committed txns per second of measured wall time
    aborts: dict  # reason name -> aborted-attempt count
    abort_rate: float  # sum(aborts) / attempts
    per_type: dict  # committed counts by transaction type
    retries_histogram: dict  # retries -> logical transaction count
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "committed": self.committed,
            "attempts": self.attempts,
            "throughput": self.throughput,
            "aborts": dict(sorted(self.aborts.items())),
            "abort_rate": self.abort_rate,
            "per_type": dict(sorted(self.per_type.items())),
            "retries_histogram": {str(k): v for k, v in
                                  sorted(self.retries_histogram.items())},
            "wall_time": self.wall_time,
        }


def _ycsb_setup(engine: Engine, config: BenchConfig):
    layout = (YcsbLayout.FINE_EVEN_ODD if config.granularity == "fine"
              else YcsbLayout.COARSE)
    wcfg = YcsbConfig(num_keys=config.num_keys, theta=config.theta,
                      layout=layout, seed=config.seed)
    ycsb_load(engine, wcfg, policy=config.policy)

    def step(wid: int):
        gen = YcsbGen(wcfg, wid)

        def one(stop):
            res = engine.run_transaction(
                lambda ctx: ycsb_txn(ctx, gen, wcfg), stop=stop)
            return "ycsb", res
        return one
    return step


def _tpcc_setup(engine: Engine, config: BenchConfig):
    layout = (TpccLayout.FINE_SPLIT if config.granularity == "fine"
              else TpccLayout.COARSE)
    kw = {}
    if config.tpcc_customers is not None:
        kw["customers_per_district"] = config.tpcc_customers
    if config.tpcc_items is not None:
        kw["items"] = config.tpcc_items
    wcfg = TpccConfig(warehouses=config.warehouses, layout=layout,
                      seed=config.seed, **kw)
    tpcc_load(engine, wcfg, policy=config.policy)

    def step(wid: int):
        gen = TpccGen(wcfg, wid)

        def one(stop):
            return run_one(engine, gen, gen.mix_next(), stop=stop)
        return one
    return step


def _fresh_tally() -> dict:
    return {"committed": 0, "attempts": 0, "aborts": {}, "per_type": {},
            "hist": {}}


def _worker(one, wid: int, config: BenchConfig, measuring, stop, out):
    if config.pin and hasattr(os, "sched_setaffinity"):
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[wid % len(cpus)]})
    tally = _fresh_tally()
    is_stopped = stop.is_set
    while not is_stopped():
        kind, res = one(is_stopped)
        if not measuring.is_set():
            continue  # warm-up, not tallied
        tally["attempts"] += len(res.abort_reasons) + (1 if res.committed else 0)
        for reason in res.abort_reasons:
            tally["aborts"][reason.value] = tally["aborts"].get(reason.value, 0) + 1
        if res.committed:
            tally["committed"] += 1
            tally["per_type"][kind] = tally["per_type"].get(kind, 0) + 1
        tally["hist"][res.retries] = tally["hist"].get(res.retries, 0) + 1
    out[wid] = tally


def run_benchmark(config: BenchConfig) -> RunMetrics:
    """One timed run: fresh engine, load, warm-up, measure, check."""
    engine = Engine()
    setup = _tpcc_setup if config.workload == "tpcc" else _ycsb_setup
    step = setup(engine, config)

    stop = threading.Event()
    measuring = threading.Event()
    out: dict = {}
    workers = [threading.Thread(target=_worker,
                                args=(step(w), w, config, measuring, stop, out))
               for w in range(config.threads)]
    old_interval = sys.getswitchinterval()
    sys.setswitchinterval(SWITCH_INTERVAL)
    # A cycle-collector pass over the loaded tables (millions of rows at
    # full scale) stalls every worker for hundreds of milliseconds, so
    # whether 0 or 2 of them land inside the window decides the run.
    # Freeze the loaded heap and keep the collector off while measuring;
    # plain refcounting still frees per-transaction garbage.
    gc_was_enabled = gc.isenabled()
    gc.collect()
    gc.freeze()
    gc.disable()
    try:
        for t in workers:
            t.start()
        time.sleep(WARMUP_SECS)
        measuring.set()
        t0 = time.perf_counter()
        time.sleep(config.duration_secs)
        stop.set()
        wall = time.perf_counter() - t0
        for t in workers:
            t.join()
    finally:
        sys.setswitchinterval(old_interval)
        gc.unfreeze()
        if gc_was_enabled:
            gc.enable()

    committed = attempts = 0
    aborts: dict = {}
    per_type: dict = {}
    hist: dict = {}
    for tally in out.values():
        committed += tally["committed"]
        attempts += tally["attempts"]
        for k, v in tally["aborts"].items():
            aborts[k] = aborts.get(k, 0) + v
        for k, v in tally["per_type"].items():
            per_type[k] = per_type.get(k, 0) + v
        for k, v in tally["hist"].items():
            hist[k] = hist.get(k, 0) + v

    engine.assert_quiescent()
    if config.workload == "tpcc":
        report = consistency_check(engine, config.warehouses)
        if not report.ok:
            raise ConsistencyViolation(
                "failed conditions: " + ", ".join(report.failing()))

    return RunMetrics(
        committed=committed, attempts=attempts,
        throughput=committed / wall,
        aborts=aborts,
        abort_rate=(sum(aborts.values()) / attempts) if attempts else 0.0,
        per_type=per_type, retries_histogram=hist, wall_time=wall)


def _stats(values) -> dict:
    return {"median": statistics.median(values),
            "min": min(values), "max": max(values)}


def aggregate_runs(runs: list) -> dict:
    """Per-metric median/min/max across runs, plus per-run detail."""
    if not runs:
        raise ValueError("need at least one run")
    reason_names = sorted({r for m in runs for r in m.aborts})
    type_names = sorted({t for m in runs for t in m.per_type})
    hist_total: dict = {}
    for m in runs:
        for k, v in m.retries_histogram.items():
            hist_total[str(k)] = hist_total.get(str(k), 0) + v
    return {
        "throughput": _stats([m.throughput for m in runs]),
        "abort_rate": _stats([m.abort_rate for m in runs]),
        "committed": _stats([m.committed for m in runs]),
        "attempts": _stats([m.attempts for m in runs]),
        "wall_time": _stats([m.wall_time for m in runs]),
        "aborts": {r: _stats([m.aborts.get(r, 0) for m in runs])
                   for r in reason_names},
        "per_type": {t: _stats([m.per_type.get(t, 0) for m in runs])
                     for t in type_names},
        "retries_histogram": dict(sorted(hist_total.items())),
        "metadata": {
            "abort_rate_denominator": "per-attempt",
            "warmup_secs": WARMUP_SECS,
        },
        "runs_detail": [m.to_dict() for m in runs],
    }


_CSV_CONFIG_COLS = ("workload", "cc", "granularity", "threads",
                    "duration_secs", "runs", "warehouses", "theta",
                    "num_keys", "seed")
_CSV_METRIC_COLS = ("throughput", "abort_rate", "committed", "attempts")


def _csv_text(summary: dict) -> str:
    cfg = summary.get("config", {})
    header = list(_CSV_CONFIG_COLS)
    row = [cfg.get(c, "") for c in _CSV_CONFIG_COLS]
    for metric in _CSV_METRIC_COLS:
        stats = summary[metric]
        for stat, suffix in (("median", "med"), ("min", "min"), ("max", "max")):
            header.append(f"{metric}_{suffix}")
            row.append(stats[stat])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerow(row)
    return buf.getvalue()


def emit(summary: dict, format: str, path: str | None = None) -> None:
    """Write the summary as CSV or JSON to path (None or "-" = stdout)."""
    if format == "json":
        text = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    elif format == "csv":
        text = _csv_text(summary)
    else:
        raise ValueError(f"unknown format {format!r}")
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise EmitError(f"cannot write {path}: {e}") from e
