import csv
import json

import pytest

from sdnlb import scenarios
from sdnlb.cli import main


def test_run_writes_metrics_and_manifest(tmp_path):
    out = tmp_path / "a"
    assert main(["run", "--config", "fig6_line", "--horizon", "2000", "--out", str(out)]) == 0
    m = json.loads((out / "metrics.json").read_text())
    man = json.loads((out / "manifest.json").read_text())
    assert m["config_digest"] == man["config_digest"]
    assert set(m["avg_backlog"]) >= {"1,1", "4,2"}
    assert man["outputs"] == ["metrics.json"] and man["seeds"] == [1]


def test_run_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", "fig6_line", "--horizon", "2000", "--seed", "4",
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()


def test_run_from_path_and_trace(tmp_path):
    cfg = tmp_path / "line.json"
    cfg.write_text(json.dumps(scenarios.line4_doc(horizon=1000)))
    assert main(["run", "--config", str(cfg), "--trace", "decimated", "--trace-format", "bin",
                 "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "trace.bin").read_bytes()[:8] == b"SDNLBTR1"


def test_run_flow_scenario(tmp_path):
    assert main(["run", "--config", "fig10_priority", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "fct.csv")))
    assert rows[0][:3] == ["flow", "commodity", "source"] and len(rows) == 121


def test_missing_config_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"topology": [,]}')
    assert main(["validate", "--config", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SDNLB_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", "fig2_line3", "--horizon", "30"]) == 0
    assert (tmp_path / "env" / "metrics.json").exists()


def test_compare_table(tmp_path):
    assert main(["compare", "--config", "fig6_line", "--algorithms", "algorithm1,maxweight", "--seeds", "1,2",
                 "--horizon", "2000", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "comparison.csv")))
    assert rows[0] == ["metric", "algorithm1_mean", "algorithm1_stderr", "maxweight_mean", "maxweight_stderr"]
    backlog_rows = [r for r in rows if r[0].startswith("backlog[")]
    assert len(backlog_rows) == 8  # 4 switches x 2 commodities
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert doc["seeds"] == [1, 2] and "backlog[1,1]" in doc["rows"]


def test_compare_same_algorithm_twice(tmp_path):
    assert main(["compare", "--config", "fig6_line", "--algorithms", "algorithm1,algorithm1", "--seeds", "3",
                 "--horizon", "1000", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert doc["algorithms"] == ["algorithm1", "algorithm1#2"]
    for row in doc["rows"].values():
        assert row["algorithm1"] == row["algorithm1#2"]


def test_compare_flow_summary(tmp_path):
    assert main(["compare", "--config", "fig10_priority", "--algorithms", "heuristic,ecmp", "--seeds", "1",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert {"fct_mean", "fct_variance", "fct_p99"} <= set(doc["rows"])


@pytest.mark.parametrize("argv", [
    ["compare", "--config", "fig6_line", "--algorithms", "algorithm1"],
    ["compare", "--config", "fig6_line", "--algorithms", "algorithm1,ecmp"],
    ["sweep", "--config", "fig6_line", "--param", "T", "--values", ""],
    ["sweep", "--config", "fig6_line", "--param", "T", "--values", "abc"],
    ["alloc-debug", "--q-local", "1,2", "--q-next", "0", "--budget", "3"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + (["--out", str(tmp_path)] if argv[0] != "alloc-debug" else [])) == 2


def test_argparse_usage_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--config", "fig6_line", "--param", "delta", "--values", "1"])
    assert exc.value.code == 2


def test_sweep_long_format(tmp_path):
    assert main(["sweep", "--config", "fig6_line", "--param", "T", "--values", "100,1000", "--horizon", "10000",
                 "--algorithms", "maxweight", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert list(rows[0]) == ["parameter", "value", "algorithm", "seed", "metric", "result"]
    b = {r["value"]: float(r["result"]) for r in rows if r["metric"] == "backlog[1,1]"}
    assert b["1000"] > b["100"]


def test_validate_and_alloc_debug(capsys):
    assert main(["validate", "--config", "fig7_intra_dc"]) == 0
    assert main(["alloc-debug", "--q-local", "30,60", "--q-next", "0,0", "--budget", "30"]) == 0
    doc = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert doc["rates"] == {"1": 10, "2": 20} and doc["k"] == 3.0


def test_validate_reports_violations(tmp_path, capsys):
    doc = scenarios.line4_doc(horizon=100)
    doc["topology"]["next_hops"].append([2, 1, [1]])
    doc["topology"]["links"].append([2, 1, 10])
    path = tmp_path / "cyc.json"
    path.write_text(json.dumps(doc))
    assert main(["validate", "--config", str(path)]) == 2
    assert "cycle" in capsys.readouterr().out
