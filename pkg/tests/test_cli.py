import json

import pytest

from provgraph.cli import main
from provgraph.syngen import GroundTruth


@pytest.fixture(scope="module")
def w2_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("w2")
    assert main(["gen", "--campaign", "w2", "--benign-events", "5000", "--seed", "3",
                 "--out", str(d / "ev.jsonl"), "--truth-out", str(d / "truth.json")]) == 0
    assert main(["ingest", "--events", str(d / "ev.jsonl"), "--alarms-out", str(d / "alarms.txt"),
                 "--graph-out", str(d / "g.pgr"), "--stats-out", str(d / "stats.json"),
                 "--compare-modes"]) == 0
    return d


def test_ingest_outputs(w2_files):
    stats = json.loads((w2_files / "stats.json").read_text())
    assert stats["mode"] == "split" and stats["bytes_per_event"] > 0
    assert stats["alarms"]["UntrustedExec"] >= 1 and "alarms_other_mode" in stats
    lines = (w2_files / "alarms.txt").read_text().splitlines()
    assert any("UntrustedExec" in l and "dropper" in l for l in lines)


def test_analyze_writes_dot_json_report(w2_files):
    d = w2_files
    assert main(["analyze", "--graph", str(d / "g.pgr"), "--dot-out", str(d / "s.dot"),
                 "--json-out", str(d / "s.json"), "--report-out", str(d / "r.json")]) == 0
    rep = json.loads((d / "r.json").read_text())
    assert rep["scenarios"] >= 1 and rep["overall_factor"] > 1
    truth = GroundTruth.load(d / "truth.json")
    shown = {n["display"] for n in json.loads((d / "s.json").read_text())["nodes"]}
    assert set(truth.entities) <= shown
    assert (d / "s.dot").read_text().startswith("digraph")


def test_analyze_unknown_alarm_id(w2_files):
    assert main(["analyze", "--graph", str(w2_files / "g.pgr"), "--alarm", "999"]) == 2


def test_benign_end_to_end(tmp_path, capsys):
    ev = tmp_path / "b.jsonl"
    assert main(["gen", "--campaign", "benign", "--benign-events", "3000", "--out", str(ev)]) == 0
    assert main(["ingest", "--events", str(ev), "--graph-out", str(tmp_path / "g.pgr"),
                 "--stats-out", str(tmp_path / "s.json")]) == 0
    assert json.loads((tmp_path / "s.json").read_text())["alarm_total"] == 0
    capsys.readouterr()
    assert main(["analyze", "--graph", str(tmp_path / "g.pgr"), "--alarm", "all"]) == 0
    assert json.loads(capsys.readouterr().out)["scenarios"] == 0


def test_ingest_from_stdin(tmp_path, monkeypatch, capsys):
    import io
    ev = tmp_path / "b.jsonl"
    main(["gen", "--campaign", "benign", "--benign-events", "200", "--out", str(ev)])
    monkeypatch.setattr("sys.stdin", io.StringIO(ev.read_text()))
    capsys.readouterr()
    assert main(["ingest", "--events", "-"]) == 0
    assert json.loads(capsys.readouterr().out)["events"] == len(ev.read_text().splitlines())


def test_bench_reports_bytes_per_event(tmp_path):
    out = tmp_path / "bench.json"
    assert main(["bench", "--events", "5000", "--campaign", "l1", "--stats-out", str(out)]) == 0
    st = json.loads(out.read_text())
    assert st["bytes_per_event"] > 0 and st["events_per_s"] > 0 and st["campaign"] == "l1"


def test_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert main(["ingest", "--events", str(bad)]) == 3
    assert main(["ingest", "--events", str(tmp_path / "missing.jsonl")]) == 1
    pol = tmp_path / "p.policy"
    pol.write_text("bogus(s): s.ttag == UNKNOWN -> skip\n")
    good = tmp_path / "g.jsonl"
    main(["gen", "--campaign", "benign", "--benign-events", "10", "--out", str(good)])
    assert main(["ingest", "--events", str(good), "--policies", str(pol)]) == 3
    (tmp_path / "junk.pgr").write_bytes(b"nope")
    assert main(["analyze", "--graph", str(tmp_path / "junk.pgr")]) == 3
    assert main(["gen", "--campaign", "w2", "--benign-events", "-1"]) == 2
    with pytest.raises(SystemExit):
        main(["gen", "--campaign", "zz"])
