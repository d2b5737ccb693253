import csv
import io
import json
import subprocess
import sys

import pytest

from sbcpe.cli import main
from sbcpe.game import load_game, save_game

from conftest import make_game


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def g2_file(tmp_path, g2):
    path = tmp_path / "g2.json"
    save_game(g2, path)
    return str(path)


def test_gen_writes_loadable_game(tmp_path):
    path = tmp_path / "g.json"
    code, _, _ = call("gen", "--n", "3", "--m", "2", "--seed", "4", "--out", str(path))
    assert code == 0
    g = load_game(path)
    assert g.action_counts == (2, 2, 2)
    code, out, _ = call("gen", "--n", "3", "--m", "2", "--seed", "4")
    assert json.loads(out) == json.loads(path.read_text())


def test_solve(g2_file):
    code, out, _ = call("solve", "--game", g2_file)
    assert code == 0
    rep = json.loads(out)
    assert rep["a_star"] == [0, 0] and rep["M"] == 3
    assert rep["delta1"] == pytest.approx(0.3)


def test_plan(g2_file):
    code, out, _ = call("plan", "--game", g2_file, "--epsilon", "0.005", "--T", "100000000000")
    assert code == 0
    assert json.loads(out)["k_star"] >= 1


def test_inadmissible_plan_exits_2(g2_file):
    code, _, err = call("plan", "--game", g2_file, "--epsilon", "0.5", "--T", "1000")
    assert code == 2 and "error" in err


def test_invalid_game_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    save_game(make_game((1,), [[0.6]], weights=[2.0]), path)
    code, _, err = call("solve", "--game", str(path))
    assert code == 2 and "agent 0" in err


def test_usage_errors_exit_1(g2_file):
    assert call("run", "--game", g2_file, "--K", "5", "--T", "10", "--epsilon", "0.3")[0] == 1
    assert call("frobnicate")[0] == 1
    assert call()[0] == 1
    assert call("run", "--game", g2_file, "--K", "x")[0] == 1


def test_run_csv(g2_file, tmp_path):
    trace_path = tmp_path / "trace.json"
    code, out, err = call("run", "--game", g2_file, "--K", "5", "--T", "8", "--epsilon", "0.3",
                          "--seed", "1", "--trace", str(trace_path))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 8 and list(rows[0]) == ["t", "welfare", "unanimous"]
    assert rows[0]["unanimous"] in ("0", "1") and rows[-1]["unanimous"] == ""
    trace = json.loads(trace_path.read_text())
    assert trace["config"]["K"] == 5 and "committed=" in err


def test_run_json_lines(g2_file):
    code, out, _ = call("run", "--game", g2_file, "--K", "3", "--T", "4", "--epsilon", "0.3",
                        "--seed", "1", "--json")
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert len(lines) == 4 and lines[0]["t"] == "1"


def test_sweep(g2_file):
    code, out, _ = call("sweep", "--game", g2_file, "--ks", "10,100", "--epsilons", "0.2,0.5",
                        "--T", "100", "--replicas", "3", "--seed", "0")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["K"], r["epsilon"]) for r in rows] == [("10", "0.2"), ("10", "0.5"), ("100", "0.2"), ("100", "0.5")]


def test_epsmap(tmp_path):
    out_path = tmp_path / "map.csv"
    code, _, err = call("epsmap", "--n", "3", "--samples", "30", "--bins", "3", "--seed", "2",
                        "--out", str(out_path))
    assert code == 0 and "kept=" in err
    rows = list(csv.DictReader(out_path.open()))
    assert 1 <= len(rows) <= 3
    assert all(float(r["min_limit_epsilon"]) <= float(r["mean_limit_epsilon"]) for r in rows)


def test_regret(tmp_path):
    game = make_game((2, 2), [[0.95, 0.0, 0.5, 0.05], [0.95, 0.5, 0.0, 0.05]], thresholds=[0.0, 0.0])
    path = tmp_path / "gap.json"
    save_game(game, path)
    code, out, _ = call("regret", "--game", str(path), "--epsilon", "0.5", "--t-grid", "100,1000",
                        "--replicas", "3", "--seed", "0")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["skipped"] == "True" and rows[1]["skipped"] == "False"


def test_verify():
    code, out, err = call("verify", "--games", "20", "--perturbations", "10", "--seed", "3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["failures"] for r in rows] == ["0", "0"]
    assert "skipped draws" in err


def test_config_file_with_override(tmp_path, g2_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"game": g2_file, "ks": [10], "epsilons": [0.3], "T": 50,
                               "replicas": 2, "seed": 5}))
    code, out, _ = call("sweep", "--config", str(cfg), "--epsilons", "0.4")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["K"], r["epsilon"]) for r in rows] == [("10", "0.4")]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sead": 5}))
    assert call("sweep", "--config", str(bad))[0] == 2


def test_console_script_entry_point(g2_file):
    proc = subprocess.run([sys.executable, "-m", "sbcpe.cli", "solve", "--game", g2_file],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["M"] == 3
