import json
import os
import sys

import pytest

from grainstore.bench import (BenchConfig, ConsistencyViolation, EmitError,
                              RunMetrics, aggregate_runs, emit, run_benchmark)
from grainstore.cli import UsageError, main, parse_config

SCALED_TPCC = dict(tpcc_customers=120, tpcc_items=500)


# -- config parsing ------------------------------------------------------------

def test_parse_defaults():
    cfg = parse_config([])
    assert (cfg.workload, cfg.cc, cfg.granularity, cfg.threads) == \
        ("ycsb", "occ", "coarse", 1)
    assert cfg.duration_secs == 15.0 and cfg.runs == 7


def test_parse_full_flags():
    cfg = parse_config(["--workload", "tpcc", "--cc", "occ", "--granularity",
                        "fine", "--threads", "8", "--warehouses", "8"])
    assert cfg.workload == "tpcc" and cfg.granularity == "fine"
    assert cfg.threads == 8 and cfg.warehouses == 8
    assert cfg.duration_secs == 15.0 and cfg.runs == 7


@pytest.mark.parametrize("argv", [
    ["--runs", "4"],            # even: median ill-defined
    ["--runs", "0"],
    ["--threads", "0"],
    ["--bogus"],
    ["--workload", "tatp"],
    ["--duration-secs", "0"],
])
def test_parse_usage_errors(argv):
    with pytest.raises(UsageError):
        parse_config(argv)
    assert main(argv) == 1


def test_config_validation_direct():
    with pytest.raises(ValueError):
        BenchConfig(cc="mvcc")
    with pytest.raises(ValueError):
        BenchConfig(granularity="medium")
    with pytest.raises(ValueError):
        BenchConfig(format="xml")
    with pytest.raises(ValueError):
        BenchConfig(warehouses=0)


# -- aggregation ---------------------------------------------------------------

def _rm(throughput=100.0, abort_rate=0.1, committed=100, attempts=110,
        aborts=None, per_type=None, hist=None):
    aborts = {"read_validation": attempts - committed} if aborts is None else aborts
    return RunMetrics(committed=committed, attempts=attempts,
                      throughput=throughput, aborts=aborts,
                      abort_rate=abort_rate,
                      per_type=per_type or {"ycsb": committed},
                      retries_histogram=hist or {0: committed},
                      wall_time=1.0)


def test_aggregate_median_min_max():
    s = aggregate_runs([_rm(throughput=3.0), _rm(throughput=1.0),
                        _rm(throughput=2.0)])
    assert s["throughput"] == {"median": 2.0, "min": 1.0, "max": 3.0}


def test_aggregate_single_run():
    s = aggregate_runs([_rm(throughput=5.0)])
    assert s["throughput"]["median"] == s["throughput"]["min"] == \
        s["throughput"]["max"] == 5.0


def test_aggregate_seven_runs_median_is_fourth():
    vals = [7.0, 3.0, 9.0, 1.0, 5.0, 8.0, 2.0]
    s = aggregate_runs([_rm(throughput=v) for v in vals])
    assert s["throughput"]["median"] == sorted(vals)[3]


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate_runs([])


def test_aggregate_merges_reasons_and_histogram():
    a = _rm(aborts={"lock_busy": 4}, hist={0: 90, 1: 10})
    b = _rm(aborts={"read_validation": 2}, hist={0: 95, 2: 5})
    s = aggregate_runs([a, b])
    assert s["aborts"]["lock_busy"] == {"median": 2.0, "min": 0, "max": 4}
    assert s["retries_histogram"] == {"0": 185, "1": 10, "2": 5}
    assert s["metadata"]["abort_rate_denominator"] == "per-attempt"


# -- emit ----------------------------------------------------------------------

def _summary():
    s = aggregate_runs([_rm()])
    s["config"] = BenchConfig().echo()
    return s


def test_emit_csv_header_and_stability(tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit(_summary(), "csv", str(p1))
    emit(_summary(), "csv", str(p2))
    text = p1.read_text()
    assert p2.read_text() == text
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[0].startswith(
        "workload,cc,granularity,threads,duration_secs,runs,")
    for col in ("throughput_med", "abort_rate_med"):
        assert col in lines[0]


def test_emit_json_round_trip(tmp_path):
    s = _summary()
    p = tmp_path / "out.json"
    emit(s, "json", str(p))
    assert json.loads(p.read_text()) == json.loads(json.dumps(s))
    p2 = tmp_path / "out2.json"
    emit(s, "json", str(p2))
    assert p.read_bytes() == p2.read_bytes()


def test_emit_io_error_names_path(tmp_path):
    bad = str(tmp_path / "no-such-dir" / "x.json")
    with pytest.raises(EmitError) as ei:
        emit(_summary(), "json", bad)
    assert bad in str(ei.value)


# -- run_benchmark -------------------------------------------------------------

def test_single_thread_tpcc_near_zero_aborts():
    """One worker has no conflicts; only the 1% intentional rollbacks abort."""
    cfg = BenchConfig(workload="tpcc", threads=1, duration_secs=0.5, runs=1,
                      seed=5, **SCALED_TPCC)
    m = run_benchmark(cfg)
    assert m.committed > 0
    assert m.abort_rate < 0.02, m.aborts
    assert set(m.aborts) <= {"user_abort"}
    assert m.committed + sum(m.aborts.values()) == m.attempts
    assert sum(m.per_type.values()) == m.committed
    assert set(m.per_type) <= {"new_order", "payment", "order_status"}


def test_contended_ycsb_conserves_attempts():
    cfg = BenchConfig(workload="ycsb", cc="occ", granularity="coarse",
                      threads=4, duration_secs=0.5, runs=1, num_keys=64,
                      seed=2)
    m = run_benchmark(cfg)
    assert m.committed + sum(m.aborts.values()) == m.attempts
    assert sum(m.aborts.values()) > 0  # 64 hot keys, 4 threads: must conflict
    assert m.per_type == {"ycsb": m.committed}
    assert m.throughput == pytest.approx(m.committed / m.wall_time)
    # histogram counts logical transactions, one entry per run_transaction
    assert sum(m.retries_histogram.values()) >= m.committed


def test_coarse_aborts_more_than_fine_occ():
    """Directional check: splitting the hot column groups must cut the
    abort rate when the contention is false sharing."""
    rates = {}
    for gran in ("coarse", "fine"):
        cfg = BenchConfig(workload="tpcc", cc="occ", granularity=gran,
                          threads=4, duration_secs=1.2, runs=1, seed=9,
                          **SCALED_TPCC)
        rates[gran] = run_benchmark(cfg).abort_rate
    assert rates["coarse"] > rates["fine"], rates


def test_switch_interval_restored():
    before = sys.getswitchinterval()
    cfg = BenchConfig(workload="ycsb", threads=2, duration_secs=0.3, runs=1,
                      num_keys=256, seed=4)
    run_benchmark(cfg)
    assert sys.getswitchinterval() == before


@pytest.mark.skipif(not hasattr(os, "sched_setaffinity"),
                    reason="no cpu affinity on this platform")
def test_pin_flag_smoke():
    cfg = BenchConfig(workload="ycsb", threads=2, duration_secs=0.3, runs=1,
                      num_keys=256, seed=4, pin=True)
    m = run_benchmark(cfg)
    assert m.committed > 0


def test_consistency_violation_raises(monkeypatch):
    class FakeReport:
        ok = False

        def failing(self):
            return ["warehouse_ytd_equals_district_sum"]

    monkeypatch.setattr("grainstore.bench.consistency_check",
                        lambda engine, w: FakeReport())
    cfg = BenchConfig(workload="tpcc", threads=1, duration_secs=0.3, runs=1,
                      seed=5, **SCALED_TPCC)
    with pytest.raises(ConsistencyViolation) as ei:
        run_benchmark(cfg)
    assert "warehouse_ytd_equals_district_sum" in str(ei.value)


# -- cli main ------------------------------------------------------------------

def test_main_json_stdout(capsys):
    rc = main(["--workload", "ycsb", "--threads", "2", "--duration-secs",
               "0.3", "--runs", "1", "--num-keys", "256", "--seed", "6"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["config"]["workload"] == "ycsb"
    assert out["config"]["threads"] == 2
    assert len(out["runs_detail"]) == 1
    r = out["runs_detail"][0]
    assert r["committed"] == r["attempts"] - sum(r["aborts"].values())


def test_main_writes_output_file(tmp_path, capsys):
    p = tmp_path / "out.csv"
    rc = main(["--duration-secs", "0.3", "--runs", "1", "--num-keys", "256",
               "--format", "csv", "--output", str(p)])
    assert rc == 0
    assert capsys.readouterr().out == ""
    assert p.read_text().splitlines()[0].startswith("workload,cc,")


def test_main_exit_2_on_consistency_violation(monkeypatch, capsys):
    def boom(config):
        raise ConsistencyViolation("failed conditions: order_id_density")

    monkeypatch.setattr("grainstore.cli.run_benchmark", boom)
    rc = main(["--workload", "tpcc", "--duration-secs", "0.2", "--runs", "1"])
    assert rc == 2
    assert "order_id_density" in capsys.readouterr().err


def test_main_exit_3_on_io_error(tmp_path, capsys):
    bad = str(tmp_path / "missing" / "out.json")
    rc = main(["--duration-secs", "0.2", "--runs", "1", "--num-keys", "128",
               "--output", bad])
    assert rc == 3
    assert bad in capsys.readouterr().err
