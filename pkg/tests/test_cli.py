import json
import subprocess
import sys

import numpy as np
import pytest

from dynsamp.cli import main, write_coords

SMALL = ["--set", "graph.n=60", "--set", "s=4", "--set", "k=3"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_then_recover(tmp_path, capsys):
    out = str(tmp_path)
    code, text, _ = run(capsys, "simulate", "--out", out, "--seed", "3", *SMALL, "--set", "M=24",
                        "--set", "sigma=1e-4")
    assert code == 0 and json.loads(text)["M"] == 24
    assert (tmp_path / "series.csv").read_text().startswith("t0,t1,t2,t3\n")
    code, text, _ = run(capsys, "recover", "--out", out, *SMALL, "--measurements", str(tmp_path / "measurements.json"),
                        "--truth", str(tmp_path / "truth.json"))
    info = json.loads(text)
    assert code == 0 and info["metrics"]["re"] < 1e-2 and info["bounds"]["noise"]["satisfied"]
    code, text, _ = run(capsys, "recover", "--out", out, *SMALL, "--measurements", str(tmp_path / "measurements.json"),
                        "--method", "regularized", "--gamma", "729", "--truth", str(tmp_path / "truth.json"))
    assert code == 0 and json.loads(text)["bounds"]["off_band"]["satisfied"]


def test_graph_build(tmp_path, capsys):
    code, text, _ = run(capsys, "graph", "build", "--out", str(tmp_path), "--set", "graph.generator=grid",
                        "--set", "graph.rows=3", "--set", "graph.cols=3")
    assert code == 0 and json.loads(text)["edges"] == 12


def test_coherence_and_complexity(capsys):
    code, text, _ = run(capsys, "coherence", *SMALL)
    d = json.loads(text)
    assert code == 0 and len(d["nu_regime2"]) == 4 and d["nu_regime1"] >= max(d["nu_regime2"])
    code, text, _ = run(capsys, "complexity", *SMALL, "--set", "regime=1,2")
    d = json.loads(text)
    assert code == 0 and d["regime1"]["M"] > 0 and len(d["regime2"]["m"]) == 4


def test_rip_check(capsys):
    code, text, _ = run(capsys, "rip-check", *SMALL, "--trials", "5")
    assert code == 0 and json.loads(text)["passed"] is True


def test_experiment_synthetic(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("graph.n = 60\ns = 4\nk = 3\nM = 24\ntrials = 3\n")
    code, text, _ = run(capsys, "experiment", "synthetic", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0 and (tmp_path / "o" / "trials.csv").exists()


def test_experiment_real(tmp_path, capsys):
    # simulate on the same kNN graph the real pipeline rebuilds from the coordinates
    coords = tmp_path / "coords.csv"
    write_coords(coords, np.random.default_rng(0).uniform(size=(50, 2)))
    run(capsys, "simulate", "--out", str(tmp_path), "--set", "graph.source=knn", "--set", f"graph.coords={coords}",
        "--set", "s=15", "--set", "k=3", "--set", "alpha=0.5")
    code, text, _ = run(capsys, "experiment", "real", "--out", str(tmp_path / "r"), "--series",
                        str(tmp_path / "series.csv"), "--coords", str(tmp_path / "coords.csv"),
                        "--set", "trials=1", "--set", "real.rates=0.5", "--set", "real.train=5",
                        "--set", "real.laplacian=normalized", "--set", "real.bandwidth=3")
    assert code == 0
    manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert manifest["audit"][0]["alpha"] == pytest.approx(0.5, rel=1e-6)


def test_error_exit_code(capsys):
    code, _, err = run(capsys, "coherence", "--set", "k=0")
    assert code == 2 and "k must be" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dynsamp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "experiment" in res.stdout


def test_recover_rejects_mismatched_config(tmp_path, capsys):
    run(capsys, "simulate", "--out", str(tmp_path), *SMALL, "--set", "M=24")
    code, _, err = run(capsys, "recover", "--out", str(tmp_path), "--set", "graph.n=40", "--set", "s=4",
                       "--set", "k=3", "--measurements", str(tmp_path / "measurements.json"))
    assert code == 2 and "config used for simulate" in err
