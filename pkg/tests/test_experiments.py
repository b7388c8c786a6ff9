import csv
import json

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from dynsamp import experiments as ex
from dynsamp.config import ConfigError, parse_config_text
from dynsamp.dynamics import AffineSystem, evolve
from dynsamp.graph import build_knn_graph, laplacian
from dynsamp.spectral import eigendecompose, random_bandlimited, shift_from_heat
from util import random_system


def small_config(**extra):
    base = {"graph.n": "80", "s": "4", "k": "3", "M": "24", "trials": "6"}
    base.update({k: str(v) for k, v in extra.items()})
    return parse_config_text("", base)


@pytest.mark.parametrize("alpha", [0.05, 1.0, 30.0])
def test_alpha_self_consistency(alpha):
    sys, L = random_system(60, 10, alpha=alpha, seed=1)
    rng = np.random.default_rng(2)
    x0, w = rng.standard_normal(60), rng.standard_normal(60)
    a, w_fit, err = ex.estimate_alpha(evolve(sys, x0, w).T, L)
    assert abs(a - alpha) / alpha <= 1e-3
    assert np.linalg.norm(w_fit - w) / np.linalg.norm(w) <= 1e-6
    assert err <= 1e-12


def test_alpha_homogeneous_data():
    sys, L = random_system(40, 8, alpha=2.0, seed=3)
    X = (evolve(sys, np.random.default_rng(0).standard_normal(40), np.zeros(40))
         + 1e-3 * np.random.default_rng(1).standard_normal((8, 40))).T
    a, w_fit, _ = ex.estimate_alpha(X, L)
    Y = sys.basis.U.T @ X
    th = sys.basis.theta

    def homogeneous(la):
        R = Y[:, 1:] - np.exp(-np.exp(la) * th)[:, None] * Y[:, :-1]
        return np.sum((R - R.mean(axis=1, keepdims=True)) ** 2)

    ref = minimize_scalar(homogeneous, bracket=(np.log(1.0), np.log(4.0)), tol=1e-12).x
    assert a == pytest.approx(np.exp(ref), rel=1e-4)
    assert np.linalg.norm(w_fit) < 1e-2


def test_alpha_errors():
    sys, L = random_system(20, 2, seed=0)
    with pytest.raises(ValueError, match="at least 3"):
        ex.estimate_alpha(np.ones((20, 2)), L)
    X = np.ones((20, 4))
    X[0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        ex.estimate_alpha(X, L)


def test_run_synthetic_records():
    cfg = small_config(regime="1,2", sigma="0,1e-3")
    run = ex.run_synthetic(cfg)
    assert len(run.records) == 4 * 6
    assert {(r.point, r.trial) for r in run.records} == {(p, t) for p in range(4) for t in range(6)}
    noiseless = [r for r in run.records if r.params["sigma"] == 0]
    assert np.median([r.metrics["re"] for r in noiseless]) < 1e-8
    assert {"c", "C", "nu", "m_required"} <= set(run.audit[0])


def test_common_random_numbers_across_points():
    run = ex.run_synthetic(small_config(sigma="0,1e-3"))
    a = [r for r in run.records if r.point == 0]
    b = [r for r in run.records if r.point == 1]
    # same trial id, same ground truth: the noiseless and noisy errors stay close
    assert all(abs(x.metrics["re"] - y.metrics["re"]) < 1e-1 for x, y in zip(a, b))


def test_infeasible_split():
    with pytest.raises(ConfigError, match="divisible"):
        ex.run_synthetic(small_config(M="25"))


def test_threads_do_not_change_output(tmp_path):
    cfg = small_config(method="known_basis,regularized", gamma="3^6,3^8", sigma="1e-4")
    one = ex.run_synthetic(cfg)
    four = ex.run_synthetic(cfg.replace(threads=4))
    ex.emit_results(one.records, tmp_path / "a", cfg, one.audit)
    ex.emit_results(four.records, tmp_path / "b", cfg, four.audit)
    for name in ("trials.csv", "summary.csv", "heatmap.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_emit_empty(tmp_path):
    files = ex.emit_results([], tmp_path / "out")
    rows = list(csv.reader(open(files["trials"])))
    assert rows == [["point", "trial", "seed"]]
    assert json.loads(files["manifest"].read_text())["n_records"] == 0
    assert "heatmap" not in files


def test_emit_summary_percentiles(tmp_path):
    recs = [ex.TrialRecord(0, t, 0, {"M": 20}, {"re": float(t)}) for t in range(50)]
    files = ex.emit_results(recs, tmp_path)
    rows = list(csv.DictReader(open(files["summary"])))
    assert len(rows) == 1
    assert float(rows[0]["re_p25"]) == pytest.approx(np.percentile(range(50), 25))
    assert float(rows[0]["re_p50"]) == pytest.approx(24.5)
    assert float(rows[0]["re_p75"]) == pytest.approx(np.percentile(range(50), 75))


def test_success_matrix():
    recs = [ex.TrialRecord(0, t, 0, {"gamma": g, "M": M}, {"re": re})
            for t, (g, M, re) in enumerate([(1, 10, 0.01), (1, 10, 0.2), (1, 20, 0.0), (3, 10, 0.5)])]
    rows, cols, P = ex.success_matrix(recs)
    assert rows == [1, 3] and cols == [10, 20]
    np.testing.assert_allclose(P[0], [0.5, 1.0])
    assert P[1, 0] == 0.0 and np.isnan(P[1, 1])


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        ex.emit_results([], blocker / "sub")


def _real_data(n=60, T=25, k=4, alpha=0.3, seed=0):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    basis = eigendecompose(laplacian(build_knn_graph(coords, 10), "combinatorial", dense=True))
    sys = AffineSystem(shift_from_heat(basis, alpha), basis, T)
    X = evolve(sys, random_bandlimited(basis, k, rng), random_bandlimited(basis, k, rng)).T
    return X, coords


def test_run_real_self_consistent():
    X, coords = _real_data()
    cfg = parse_config_text("", {"trials": "2", "real.rates": "0.3, 1.0", "real.bandwidth": "4"})
    run = ex.run_real(cfg, X, coords)
    assert run.audit[0]["alpha"] == pytest.approx(0.3, rel=1e-6)
    assert all(r.metrics["re"] < 1e-8 for r in run.records)
    assert {r.params["m_t"] for r in run.records} == {18, 60}


def test_run_real_energy_bandwidth():
    X, coords = _real_data()
    run = ex.run_real(parse_config_text("", {"trials": "1", "real.rates": "0.5"}), X, coords)
    assert 1 <= run.records[0].params["k"] <= 4


def test_run_real_shape_errors():
    X, coords = _real_data()
    cfg = parse_config_text("", {"trials": "1"})
    with pytest.raises(ValueError, match="coords"):
        ex.run_real(cfg, X, coords[:-1])
    with pytest.raises(ValueError, match="steps"):
        ex.run_real(cfg.replace(real_steps=100), X, coords)


def test_load_series(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("2020-01,2020-02,2020-03\n1,2,3\n4,5,6\n")
    np.testing.assert_array_equal(ex.load_series(p), [[1, 2, 3], [4, 5, 6]])
    p.write_text("a,b\n1,2,3\n")
    with pytest.raises(ValueError):
        ex.load_series(p)
