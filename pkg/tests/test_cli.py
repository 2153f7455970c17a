import json
from pathlib import Path

import numpy as np
import pytest

from aftercast.cli import main, render_report
from aftercast.panel import write_panel_csv
from conftest import make_record

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def panel(tmp_path, three_series):
    p = tmp_path / "panel.csv"
    write_panel_csv(three_series, p)
    return p


@pytest.fixture
def single(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.normal(size=10)
    p = tmp_path / "one.csv"
    write_panel_csv([make_record("solo", y, y[:, None] + rng.normal(size=(10, 3)), history=rng.normal(size=5))], p)
    return p


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text('kind = "linreg"\np0 = 2\nn_draws = 2\nn_replicates = 2\nseed = 1\n'
                 'methods = ["A2", "A1", "At", "Ag"]\n[noise]\nfamily = "t"\ndof = 3\nvariance = 1.0\n')
    return p


def test_simulate_bundled_config_smoke(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", str(ROOT / "configs" / "linreg_p0_3_t3.toml"), "--draws", "2", "--replicates", "2",
                 "--out", str(out)])
    assert code == 0
    rows = (out / "ratios.csv").read_text().splitlines()
    assert {r.split(",")[0] for r in rows[1:]} >= {"A2", "At", "Ag"}
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["settings"]["scenario"]["n_draws"] == 2
    assert len(next(iter(man["inputs"].values()))) == 64


def test_simulate_seed_reproducible(tmp_path, tiny_config):
    for d in ("a", "b"):
        assert main(["simulate", str(tiny_config), "--seed", "7", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "ratios.csv").read_bytes() == (tmp_path / "b" / "ratios.csv").read_bytes()


def test_simulate_json_config(tmp_path):
    assert main(["simulate", str(ROOT / "configs" / "smoke_linreg.json"), "--draws", "1", "--replicates", "1",
                 "--out", str(tmp_path)]) == 0


def test_simulate_errors(tmp_path, tiny_config):
    assert main(["simulate", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text('kind = "linreg"\np0 = 3\nbogus = 1\n')
    assert main(["simulate", str(bad), "--out", str(tmp_path)]) == 2
    broken = tmp_path / "broken.toml"
    broken.write_text("kind = = 3")
    assert main(["simulate", str(broken)]) == 2
    assert main(["simulate", str(tiny_config), "--jobs", "0"]) == 2


def test_jobs_env_fallback(tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("AFTERCAST_JOBS", "2")
    assert main(["simulate", str(tiny_config), "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["settings"]["jobs"] == 2
    monkeypatch.setenv("AFTERCAST_JOBS", "many")
    assert main(["simulate", str(tiny_config), "--out", str(tmp_path / "f")]) == 2


def test_bench_fixture(tmp_path, panel):
    out = tmp_path / "bench"
    assert main(["bench", str(panel), "--methods", "SA,MD,Ag,BG_0.9", "--out", str(out)]) == 0
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "method,mean,se,median,min,q1,q3,max" and len(summary) == 1 + 4
    ratios = (out / "ratios.csv").read_text().splitlines()
    assert len(ratios) == 1 + 3 and (out / "manifest.json").exists()


def test_bench_screen_filters(tmp_path, panel):
    from aftercast.panel import load_panel_csv, screen_records
    recs = load_panel_csv(panel)
    kept, _ = screen_records(recs)
    code = main(["bench", str(panel), "--methods", "SA,Ag", "--screen", "heavy-tail", "--out", str(tmp_path / "s")])
    if kept:
        assert code == 0
        rows = (tmp_path / "s" / "ratios.csv").read_text().splitlines()[1:]
        assert [r.split(",")[0] for r in rows] == [r.series_id for r in kept]
    else:
        assert code == 3


def test_bench_errors(tmp_path, panel):
    assert main(["bench", str(panel), "--methods", ""]) == 2
    assert main(["bench", str(panel), "--methods", "SA,XYZ"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("series_id,split,t,month,actual,f_a\nA,test,1,1,1.0,\n")
    assert main(["bench", str(bad)]) == 2
    assert main(["bench", str(tmp_path / "none.csv")]) == 2


def test_combine_trace(tmp_path, single):
    out = tmp_path / "c" / "trace.csv"
    assert main(["combine", str(single), "--method", "l2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 11
    for row in lines[1:]:
        w = np.array([float(v) for v in row.split(",")[3:]])
        assert abs(w.sum() - 1) < 1e-12


def test_combine_echoes_overrides(tmp_path, single):
    out = tmp_path / "g" / "trace.csv"
    assert main(["combine", str(single), "--method", "g", "--c1", "1", "--c2", "2", "--omega", "1,3",
                 "--out", str(out)]) == 0
    after = json.loads((out.parent / "manifest.json").read_text())["settings"]["after"]
    assert after["method"] == "G" and after["c1"] == 1.0 and after["c2"] == 2.0 and after["omega"] == [1.0, 3.0]


def test_combine_errors(tmp_path, single, panel, capsys):
    assert main(["combine", str(single), "--method", "l3"]) == 2
    assert "l2" in capsys.readouterr().err
    assert main(["combine", str(panel), "--method", "g"]) == 2


def test_combine_resume_matches_single_pass(tmp_path):
    rng = np.random.default_rng(1)
    y = rng.normal(size=12)
    F = y[:, None] + rng.normal(size=(12, 3))
    whole, a, b = tmp_path / "whole.csv", tmp_path / "a.csv", tmp_path / "b.csv"
    write_panel_csv([make_record("s", y, F)], whole)
    write_panel_csv([make_record("s", y[:7], F[:7])], a)
    write_panel_csv([make_record("s", y[7:], F[7:])], b)
    assert main(["combine", str(whole), "--method", "t", "--out", str(tmp_path / "w" / "t.csv")]) == 0
    assert main(["combine", str(a), "--method", "t", "--out", str(tmp_path / "p1" / "t.csv"),
                 "--state-out", str(tmp_path / "state.json")]) == 0
    assert main(["combine", str(b), "--resume", str(tmp_path / "state.json"),
                 "--out", str(tmp_path / "p2" / "t.csv")]) == 0
    full = (tmp_path / "w" / "t.csv").read_text().splitlines()
    parts = (tmp_path / "p1" / "t.csv").read_text().splitlines() + \
        (tmp_path / "p2" / "t.csv").read_text().splitlines()[1:]
    assert full == parts
    assert main(["combine", str(b), "--resume", str(tmp_path / "state.json"), "--method", "g"]) == 2


def test_screen_command(tmp_path, panel):
    assert main(["screen", str(panel), "--out", str(tmp_path / "sc")]) == 0
    rows = (tmp_path / "sc" / "screen.csv").read_text().splitlines()
    assert rows[0] == "series_id,screenable,heavy,kurtosis,terms" and len(rows) == 4


def test_report_round_trip(tmp_path, panel, tiny_config, capsys):
    main(["simulate", str(tiny_config), "--out", str(tmp_path / "s")])
    main(["bench", str(panel), "--methods", "SA,Ag", "--out", str(tmp_path / "b")])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "s" / "ratios.csv")]) == 0
    assert "At" in capsys.readouterr().out
    assert "Ag" in render_report(tmp_path / "b" / "summary.csv")
    rng = np.random.default_rng(2)
    y = rng.normal(size=10)
    one = tmp_path / "one.csv"
    write_panel_csv([make_record("s", y, y[:, None] + rng.normal(size=(10, 2)))], one)
    main(["combine", str(one), "--out", str(tmp_path / "c" / "t.csv"), "--state-out", str(tmp_path / "st.json")])
    assert "10 periods absorbed" in render_report(tmp_path / "st.json")
    junk = tmp_path / "junk.csv"
    junk.write_text("a,b\n1,2\n")
    assert main(["report", str(junk)]) == 3
    assert main(["report", str(tmp_path / "nothing.csv")]) == 2
    assert main(["report", str(tmp_path / "s" / "ratios.csv"), "--out", str(tmp_path / "r" / "t.txt")]) == 0
    assert (tmp_path / "r" / "manifest.json").exists()


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
