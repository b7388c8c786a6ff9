"""Synthetic and real-data sampling/recovery protocols and result emission."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import graph as gr
from .config import ConfigError, ExperimentConfig
from .dynamics import AffineSystem, evolve, stability_bounds
from .metrics import evaluate
from .recovery import RegularizerPoly, recover_known_basis, recover_regularized
from .sampling import (Regime, SamplingPlan, coherence_regime1, coherence_regime2, design_matrix,
                       draw_samples, measure, sample_complexity)
from .spectral import (SpectralBasis, bandwidth_for_energy, eigendecompose, random_bandlimited,
                       shift_from_heat)

log = logging.getLogger(__name__)


@dataclass
class TrialRecord:
    point: int
    trial: int
    seed: int
    params: dict
    metrics: dict
    diagnostics: dict = field(default_factory=dict)
    runtime_ms: float = 0.0


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Independent stream per trial id, shared across parameter points."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial,)))


def build_graph(config: ExperimentConfig) -> gr.Graph:
    if config.graph_source == "edges":
        return gr.load_edge_list(config.graph_path)
    if config.graph_source == "knn":
        return gr.build_knn_graph(gr.load_coords(config.graph_coords), config.graph_knn_k)
    if config.graph_generator == "grid":
        return gr.grid_graph(config.graph_rows, config.graph_cols)
    if config.graph_generator == "rgg":
        return gr.random_geometric_graph(config.graph_n, config.graph_radius, config.graph_seed)
    raise ConfigError(f"unknown graph.generator {config.graph_generator!r}")


def build_basis(g: gr.Graph, kind: str) -> tuple[np.ndarray, SpectralBasis]:
    L = gr.laplacian(g, kind, dense=True)
    return L, eigendecompose(L)


def _points(config: ExperimentConfig):
    """Parameter points in a fixed order: regime, s, sample count, sigma, method, gamma."""
    counts = [("M", M) for M in config.M] if config.M else [("m_t", m) for m in (config.m_t or [])]
    if not counts:
        raise ConfigError("synthetic runs need M or m_t")
    for regime, s, (kind, count), sigma, method in itertools.product(
            config.regime, config.s, counts, config.sigma, config.method):
        gammas = config.gamma if method == "regularized" else [None]
        for gamma in gammas:
            if kind == "M":
                if count % s:
                    raise ConfigError(f"M={count} is not divisible by s={s}")
                m_t, M = count // s, count
            else:
                m_t, M = count, count * s
            yield {"regime": int(regime), "s": int(s), "M": int(M), "m_t": int(m_t),
                   "sigma": float(sigma), "method": method, "gamma": gamma}


def audit_constants(basis: SpectralBasis, alpha: float, k: int, s: int, regime: int,
                    delta: float, eps: float) -> dict:
    """Embedding constants, coherence and the sufficient sample count (uniform sampling)."""
    sys = AffineSystem(shift_from_heat(basis, alpha), basis, s)
    sb = stability_bounds(sys, k)
    p = np.full(basis.n, 1.0 / basis.n)
    out = {"c": sb.c, "C": sb.C, "k": k, "s": s, "regime": regime, "delta": delta, "eps": eps}
    if regime == 1:
        nu = coherence_regime1(basis, sys.shift, k, s, p)
        out["nu"] = nu
        out["m_required"] = sample_complexity(nu, sb.c, k, delta, eps) if sb.c > 0 else None
    else:
        nu = [coherence_regime2(basis, sys.shift, k, t, p) for t in range(s)]
        out["nu"] = nu
        out["m_required"] = [sample_complexity(v, sb.c, k, delta, eps) for v in nu] if sb.c > 0 else None
    return out


def _half_metrics(prefix: str, est, truth) -> dict:
    rep = evaluate(est, truth)
    return {f"{prefix}mae": rep.mae, f"{prefix}mape": rep.mape, f"{prefix}re": rep.re}


def _synthetic_trial(config, point_id, params, trial, basis, L, A, sys_cache):
    t0 = time.perf_counter()
    rng = trial_rng(config.seed, trial)
    k, n, s = config.k, basis.n, params["s"]
    sys = sys_cache[s]
    x0 = random_bandlimited(basis, k, rng)
    w = random_bandlimited(basis, k, rng)
    plan = SamplingPlan.uniform(n, s, params["m_t"], Regime(params["regime"]))
    samples = draw_samples(plan, rng)
    meas = measure(evolve(sys, x0, w), samples, params["sigma"], rng)
    if params["method"] == "known_basis":
        res = recover_known_basis(meas, plan, sys, k, delta=config.delta, eps=config.eps,
                                  with_coherence=False)
    else:
        res = recover_regularized(meas, plan, A, L, RegularizerPoly.power(config.g_degree),
                                  params["gamma"], s, tol=config.solver_tol,
                                  max_iters=config.solver_max_iters,
                                  strict_deterministic=config.solver_strict_deterministic)
    truth = np.concatenate([x0, w])
    metrics = {**_half_metrics("", res.w_aug_star, truth), **_half_metrics("x0_", res.x0_star, x0),
               **_half_metrics("w_", res.w_star, w)}
    metrics["success"] = int(metrics["re"] < config.success_threshold)
    B = design_matrix(sys, k, samples, plan)
    ev = np.linalg.eigvalsh(B.T @ B)
    sb = stability_bounds(sys, k)
    delta_emp = max(1 - ev[0] / sb.c if sb.c > 0 else math.inf, ev[-1] / sb.C - 1, 0.0)
    diag = {"R": res.diagnostics["R"], "delta_emp": float(delta_emp),
            "iterations": res.diagnostics.get("iterations"),
            "converged": res.diagnostics.get("converged"),
            "wpe_norm": res.diagnostics.get("wpe_norm")}
    return TrialRecord(point_id, trial, config.seed, dict(params), metrics, diag,
                       (time.perf_counter() - t0) * 1e3)


@dataclass
class ExperimentRun:
    config: ExperimentConfig
    records: list
    audit: list

    def __iter__(self):
        return iter(self.records)


def run_synthetic(config: ExperimentConfig) -> ExperimentRun:
    """Sweep the configured parameter points, ``config.trials`` seeded trials each.

    Ground truth halves are drawn in the band, sampled uniformly at random
    under the configured regime, and recovered with the configured method(s).
    """
    if config.alpha == "estimate":
        raise ConfigError("synthetic runs need a numeric alpha")
    g = build_graph(config)
    L, basis = build_basis(g, config.laplacian)
    if config.k > basis.n:
        raise ConfigError(f"k={config.k} exceeds n={basis.n}")
    shift = shift_from_heat(basis, float(config.alpha))
    A = shift.matrix(basis)
    points = list(_points(config))
    sys_cache = {s: AffineSystem(shift, basis, s) for s in {p["s"] for p in points}}
    audit, seen = [], {}
    for pid, p in enumerate(points):
        key = (p["regime"], p["s"])
        if key not in seen:
            seen[key] = audit_constants(basis, float(config.alpha), config.k, p["s"], p["regime"],
                                        config.delta, config.eps)
            audit.append(seen[key])
    jobs = [(pid, p, trial) for pid, p in enumerate(points) for trial in range(config.trials)]

    def run(job):
        pid, p, trial = job
        return _synthetic_trial(config, pid, p, trial, basis, L, A, sys_cache)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    records.sort(key=lambda r: (r.point, r.trial))
    return ExperimentRun(config, records, audit)


def _alpha_objective(theta, Y, log_alpha):
    """Summed squared residual of the best constant source for ``A = exp(-alpha L)``.

    ``Y`` holds the snapshots in the Laplacian eigenbasis (``n x s0``).
    """
    lam = np.exp(-np.exp(log_alpha) * theta)
    R = Y[:, 1:] - lam[:, None] * Y[:, :-1]
    w_hat = R.mean(axis=1)
    return float(np.sum((R - w_hat[:, None]) ** 2)), w_hat


def _local_minima(vals: np.ndarray) -> int:
    inner = (vals[1:-1] < vals[:-2]) & (vals[1:-1] <= vals[2:])
    return int(inner.sum())


def estimate_alpha(training, L, lo: float = 1e-3, hi: float = 1e3, grid_points: int = 61,
                   refine_iters: int = 40, basis: SpectralBasis | None = None):
    """Fit ``alpha`` and ``w`` in ``x_{t+1} = exp(-alpha L) x_t + w`` to snapshots.

    Parameters
    ----------
    training : ndarray, shape (n, s0)
        Fully observed snapshots, one column per time step; ``s0 >= 3``.
    L : ndarray
        Laplacian generating the shift.
    lo, hi, grid_points
        Log-spaced search grid for ``alpha``.
    refine_iters : int
        Golden-section iterations (in ``log alpha``) around the best grid point.

    Returns
    -------
    alpha : float
    w_fit : ndarray, shape (n,)
        Least-squares constant source at ``alpha``.
    fit_error : float
        Summed squared one-step residual.
    """
    X = np.asarray(training, dtype=float)
    if X.ndim != 2 or X.shape[1] < 3:
        raise ValueError("training window needs at least 3 snapshots (n x s0 with s0 >= 3)")
    if not np.all(np.isfinite(X)):
        raise ValueError("training data must be finite")
    basis = eigendecompose(L) if basis is None else basis
    theta = basis.theta
    Y = basis.U.T @ X
    f = lambda la: _alpha_objective(theta, Y, la)[0]  # noqa: E731

    grid = np.linspace(np.log(lo), np.log(hi), grid_points)
    vals = np.array([f(x) for x in grid])
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite objective on the alpha grid")
    i = int(np.argmin(vals))
    a_idx, b_idx = max(i - 1, 0), min(i + 1, grid_points - 1)
    # validate the bracket: widen while the scan minimum sits on an inner edge,
    # narrow around the best scan point if the scan is multimodal
    for _ in range(grid_points):
        scan = np.linspace(grid[a_idx], grid[b_idx], 41)
        sv = np.array([f(x) for x in scan])
        j = int(np.argmin(sv))
        if j == 0 and a_idx > 0:
            a_idx -= 1
            continue
        if j == scan.size - 1 and b_idx < grid_points - 1:
            b_idx += 1
            continue
        break
    if _local_minima(sv) > 1:
        a, b = scan[max(j - 1, 0)], scan[min(j + 1, scan.size - 1)]
    else:
        a, b = grid[a_idx], grid[b_idx]
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(refine_iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = min([(fc, c), (fd, d), (sv[j], scan[j])])
    log_alpha = best[1]
    err, w_hat = _alpha_objective(theta, Y, log_alpha)
    return float(np.exp(log_alpha)), basis.U @ w_hat, err


def load_series(path) -> np.ndarray:
    """Time-series CSV: header row of timestamps, then one row per node."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        rows = [[float(v) for v in r] for r in reader if r]
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(header):
        raise ValueError(f"{path}: every row must have {len(header)} values")
    return X


def run_real(config: ExperimentConfig, series, coords) -> ExperimentRun:
    """Regime-2 sampling and known-basis recovery on observed data.

    ``alpha`` is fitted on the first ``real.train`` snapshots (unless given),
    the bandwidth is chosen by the energy rule on the same window, and each
    rate is scored at the unsampled space-time points of the forward-rolled
    reconstruction.
    """
    X = np.asarray(series, dtype=float)
    coords = np.asarray(coords, dtype=float)
    n, T = X.shape
    if coords.shape != (n, 2):
        raise ValueError(f"coords shape {coords.shape} does not match {n} series rows")
    s0 = config.real_train
    s = config.real_steps if config.real_steps is not None else T - s0
    if s < 1 or T < s0 + s:
        raise ValueError(f"series has {T} steps; need train {s0} + steps {s}")
    g = gr.build_knn_graph(coords, config.graph_knn_k)
    L, basis = build_basis(g, config.real_laplacian)
    train = X[:, :s0]
    if config.real_alpha == "estimate":
        alpha, _, fit_err = estimate_alpha(train, L, config.alpha_lo, config.alpha_hi,
                                           config.alpha_grid_points, config.alpha_refine_iters, basis)
    else:
        alpha, fit_err = float(config.real_alpha), None
    k = config.real_bandwidth or bandwidth_for_energy(basis, train.T, config.real_energy)
    sys = AffineSystem(shift_from_heat(basis, alpha), basis, s)
    data = X[:, s0:s0 + s].T
    audit = [{**audit_constants(basis, alpha, k, s, 2, config.delta, config.eps),
              "alpha": alpha, "alpha_fit_error": fit_err, "n": n}]
    records = []
    sigma = config.sigma[0] if config.sigma else 0.0
    for pid, rate in enumerate(config.real_rates):
        m_t = max(1, int(round(rate * n)))
        for trial in range(config.trials):
            t0 = time.perf_counter()
            rng = trial_rng(config.seed, trial)
            plan = SamplingPlan.uniform(n, s, m_t, Regime.TIME_VARYING)
            samples = draw_samples(plan, rng)
            meas = measure(data, samples, sigma, rng)
            res = recover_known_basis(meas, plan, sys, k, with_coherence=False)
            pred = evolve(sys, res.x0_star, res.w_star)
            mask = np.ones_like(data, dtype=bool)
            tt, vv = samples.rows()
            mask[tt, vv] = False
            if not mask.any():
                mask[:] = True  # everything observed: score the full window
            rep = evaluate(pred[mask], data[mask])
            metrics = {"mae": rep.mae, "mape": rep.mape, "re": rep.re, "n_eval": rep.n_eval,
                       "mape_excluded": rep.excluded}
            params = {"rate": float(rate), "m_t": m_t, "s": s, "k": k, "alpha": alpha,
                      "sigma": float(sigma), "regime": 2, "method": "known_basis"}
            records.append(TrialRecord(pid, trial, config.seed, params, metrics,
                                       {"R": res.diagnostics["R"], "rank": res.diagnostics["rank"]},
                                       (time.perf_counter() - t0) * 1e3))
    return ExperimentRun(config, records, audit)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _percentiles(values) -> tuple:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return (math.nan,) * 3
    return tuple(float(x) for x in np.percentile(v, [25, 50, 75]))


def summarize(records) -> list[dict]:
    """One row per parameter point with p25/p50/p75 of every metric."""
    rows = []
    by_point = {}
    for r in records:
        by_point.setdefault(r.point, []).append(r)
    for pid in sorted(by_point):
        recs = by_point[pid]
        row = {"point": pid, **recs[0].params, "trials": len(recs)}
        for key in recs[0].metrics:
            p25, p50, p75 = _percentiles([r.metrics[key] for r in recs])
            row[f"{key}_p25"], row[f"{key}_p50"], row[f"{key}_p75"] = p25, p50, p75
        rows.append(row)
    return rows


def success_matrix(records, row_key: str = "gamma", col_key: str = "M", threshold: float = 0.05,
                   **fixed):
    """Success probability ``P(RE < threshold)`` on a ``row_key x col_key`` grid.

    Extra keyword arguments restrict records to matching parameter values.
    Returns ``(row_values, col_values, matrix)``.
    """
    sel = [r for r in records if all(r.params.get(k) == v for k, v in fixed.items())]
    rows = sorted({r.params[row_key] for r in sel})
    cols = sorted({r.params[col_key] for r in sel})
    hits = np.zeros((len(rows), len(cols)))
    tot = np.zeros((len(rows), len(cols)))
    for r in sel:
        i, j = rows.index(r.params[row_key]), cols.index(r.params[col_key])
        tot[i, j] += 1
        hits[i, j] += r.metrics["re"] < threshold
    with np.errstate(invalid="ignore"):
        return rows, cols, hits / tot


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(h)) for h in header])


def emit_results(records, path, config: ExperimentConfig | None = None, audit=None,
                 threshold: float | None = None) -> dict:
    """Write ``manifest.json``, ``trials.csv``, ``summary.csv`` and, for
    regularized sweeps, ``heatmap.csv`` into directory ``path``.

    ``trials.csv`` columns: ``point, trial, seed``, then ``param_*``,
    ``metric_*`` and ``diag_*`` columns, then ``runtime_ms`` unless the
    solver runs in strict deterministic mode (timings are not reproducible).
    Returns a mapping of artifact name to written path.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    records = list(records)
    strict = config.solver_strict_deterministic if config is not None else True
    threshold = threshold if threshold is not None else (config.success_threshold if config else 0.05)

    def keys(attr):
        seen = {}
        for r in records:
            for k in getattr(r, attr):
                seen.setdefault(k, None)
        return list(seen)

    pk, mk, dk = keys("params"), keys("metrics"), keys("diagnostics")
    header = ["point", "trial", "seed"] + [f"param_{k}" for k in pk] + [f"metric_{k}" for k in mk] \
        + [f"diag_{k}" for k in dk] + ([] if strict else ["runtime_ms"])
    flat = []
    for r in records:
        row = {"point": r.point, "trial": r.trial, "seed": r.seed, "runtime_ms": r.runtime_ms}
        row.update({f"param_{k}": v for k, v in r.params.items()})
        row.update({f"metric_{k}": v for k, v in r.metrics.items()})
        row.update({f"diag_{k}": v for k, v in r.diagnostics.items()})
        flat.append(row)
    written = {}
    _write_csv(out / "trials.csv", header, flat)
    written["trials"] = out / "trials.csv"

    summary = summarize(records)
    sheader = list(dict.fromkeys(k for row in summary for k in row)) or ["point"]
    _write_csv(out / "summary.csv", sheader, summary)
    written["summary"] = out / "summary.csv"

    reg = [r for r in records if r.params.get("gamma") is not None]
    if reg:
        rows = []
        for regime, sigma in sorted({(r.params["regime"], r.params["sigma"]) for r in reg}):
            gam, Ms, P = success_matrix(reg, "gamma", "M", threshold, regime=regime, sigma=sigma)
            for i, gv in enumerate(gam):
                for j, Mv in enumerate(Ms):
                    rows.append({"regime": regime, "sigma": sigma, "gamma": gv, "M": Mv,
                                 "success_prob": P[i, j]})
        _write_csv(out / "heatmap.csv", ["regime", "sigma", "gamma", "M", "success_prob"], rows)
        written["heatmap"] = out / "heatmap.csv"

    manifest = {
        "config": config.to_dict() if config is not None else None,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__, "platform": platform.platform()},
        "seeds": {"master": config.seed if config else None,
                  "trials": sorted({r.trial for r in records})},
        "audit": _jsonable(audit or []),
        "n_records": len(records),
        "success_threshold": threshold,
        "columns": header,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    written["manifest"] = out / "manifest.json"
    return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
