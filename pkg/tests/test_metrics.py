import csv
import json

import numpy as np
import pytest

from sdnlb import scenarios
from sdnlb.metrics import (
    TRACE_CSV_COLUMNS,
    SlotTrace,
    collect_metrics,
    convergence_slot,
    default_window,
    read_trace_binary,
    write_trace_binary,
    write_trace_csv,
)
from sdnlb.sim import run


def constant_trace(value=7, T=10, n_int=20, k=None):
    nq = 2
    prefix = np.arange(n_int + 1)[:, None] * np.full(nq, value * T)
    kv = np.full((n_int, 1), np.nan) if k is None else np.asarray(k, dtype=float).reshape(n_int, 1)
    return SlotTrace(
        T=T, horizon=T * n_int, nodes=[1, 2], comms=[1], links=[(1, 2)], pairs=[(1, 2, 1)],
        active=np.array([True, True]), queue_prefix=prefix,
        backlog_by_comm=np.full((T * n_int + 1, 1), 2 * value),
        interval_arrivals=np.zeros((n_int, nq)), interval_departures=np.zeros((n_int, nq)),
        interval_transmissions=np.zeros((n_int, 1)), interval_alloc=np.zeros((n_int, 1)),
        k_values=kv, k_saturated=(kv == 10), K=10.0,
    )


def test_constant_backlog():
    rep = collect_metrics(constant_trace(7))
    assert rep.avg_backlog == {"1,1": 7.0, "2,1": 7.0}
    assert rep.mean_backlog_per_queue == 7.0
    assert rep.k_saturation is None


def test_window_rules():
    tr = constant_trace()
    assert default_window(tr) == (40, 200)
    with pytest.raises(ValueError):
        collect_metrics(tr, window=(50, 50))
    with pytest.raises(ValueError):
        collect_metrics(tr, window=(5, 200))
    assert collect_metrics(tr, window=(0, 100)).window == (0, 100)


def test_k_saturation_fraction():
    k = [10.0] * 5 + [1.0] * 15
    rep = collect_metrics(constant_trace(k=k), window=(0, 200))
    assert rep.k_saturation == 0.25 and rep.k_max == 10.0


def test_convergence_detector():
    tr = constant_trace()
    assert convergence_slot(tr) == 100
    assert collect_metrics(tr, use_detector=True).window == (100, 200)


@pytest.fixture(scope="module")
def small_run():
    return run(scenarios.build("fig6_line", horizon=2000), trace="decimated", stride=50)


def test_csv_export(tmp_path, small_run):
    rep, tr = small_run
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == TRACE_CSV_COLUMNS
    body = rows[1:]
    assert len(body) == len(tr.snapshots) * int(tr.active.sum())
    slot, i, d, q = map(int, body[-1])
    assert slot == 50 * (len(tr.snapshots) - 1)
    assert tr.snapshots[-1][tr.queue_index(i, d)] == q


def test_binary_round_trip(tmp_path, small_run):
    rep, tr = small_run
    path = tmp_path / "trace.bin"
    write_trace_binary(tr, path)
    got = read_trace_binary(path)
    assert got["digest"] == tr.digest == rep.config_digest
    assert got["nodes"] == tr.nodes and got["comms"] == tr.comms and got["stride"] == 50
    assert (got["snapshots"] == tr.snapshots).all()
    raw = path.read_bytes()
    assert raw[:8] == b"SDNLBTR1"
    assert len(raw) == 8 + 32 + 24 + 4 * (len(tr.nodes) + len(tr.comms)) + 8 * tr.snapshots.size


def test_no_snapshot_export_rejected(tmp_path):
    _, tr = run(scenarios.build("fig6_line", horizon=200))
    with pytest.raises(ValueError):
        write_trace_csv(tr, tmp_path / "x.csv")


def test_report_json(small_run):
    rep, _ = small_run
    doc = json.loads(rep.to_json())
    assert doc["config_digest"] == rep.config_digest and doc["window"] == [400, 2000]
    assert rep.to_json() == collect_metrics(small_run[1]).to_json()
