"""Command-line entry point: ``dynsamp <command> [options]``.

Every command reads the flat ``key = value`` experiment config given by
``--config`` (see :mod:`dynsamp.config`); ``--set key=value`` overrides
single keys. Outputs go to ``--out`` (a directory).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import graph as gr
from .config import ConfigError, load_config
from .dynamics import AffineSystem, evolve, stability_bounds
from .metrics import evaluate
from .recovery import RegularizerPoly, check_error_bounds, recover_known_basis, recover_regularized
from .sampling import (Measurements, Regime, SamplingPlan, coherence_regime1, coherence_regime2,
                       coherence_upper_bound, draw_samples, measure, required_samples, rip_check)
from .spectral import random_bandlimited, shift_from_heat

log = logging.getLogger("dynsamp")


def _global_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    p.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_parser()
    parser = argparse.ArgumentParser(prog="dynsamp", parents=[common],
                                     description="Dynamical sampling of bandlimited graph signals.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="graph utilities")
    gsub = g.add_subparsers(dest="graph_command", required=True)
    gsub.add_parser("build", parents=[common], help="build the configured graph and write graph.csv")

    sim = sub.add_parser("simulate", parents=[common],
                         help="evolve a random bandlimited system and optionally sample it")
    sim.add_argument("--no-measure", action="store_true", help="skip drawing measurements")

    sub.add_parser("coherence", parents=[common], help="coherence under uniform sampling")
    sub.add_parser("complexity", parents=[common], help="sufficient sample counts for (delta, eps)")

    rec = sub.add_parser("recover", parents=[common], help="reconstruct [x0; w] from measurements")
    rec.add_argument("--measurements", required=True, help="measurements JSON from simulate")
    rec.add_argument("--method", choices=["known_basis", "regularized"], default=None)
    rec.add_argument("--gamma", type=float, default=None)
    rec.add_argument("--truth", default=None, help="truth JSON, to score the result and check bounds")

    exp = sub.add_parser("experiment", help="run a protocol")
    esub = exp.add_subparsers(dest="experiment_command", required=True)
    esub.add_parser("synthetic", parents=[common], help="synthetic sweep")
    real = esub.add_parser("real", parents=[common], help="real-data protocol")
    real.add_argument("--series", default=None, help="time-series CSV (rows = nodes)")
    real.add_argument("--coords", default=None, help="id,lat,lon CSV")

    rip = sub.add_parser("rip-check", parents=[common], help="empirical RIP check of one draw")
    rip.add_argument("--trials", type=int, default=100, help="random bandlimited probes")
    return parser


def _config(args):
    overrides = {}
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for flag in ("seed", "threads", "out"):
        if hasattr(args, flag):
            overrides["output" if flag == "out" else flag] = str(getattr(args, flag))
    return load_config(getattr(args, "config", None), overrides)


def _out(cfg) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _system(cfg, s=None):
    if cfg.alpha == "estimate":
        raise ConfigError("this command needs a numeric alpha")
    g = ex.build_graph(cfg)
    L, basis = ex.build_basis(g, cfg.laplacian)
    if cfg.k > basis.n:
        raise ConfigError(f"k={cfg.k} exceeds n={basis.n}")
    s = cfg.s[0] if s is None else s
    return g, L, AffineSystem(shift_from_heat(basis, float(cfg.alpha)), basis, s)


def _plan(cfg, n, s, regime):
    if cfg.M:
        return SamplingPlan.equal_split(n, s, cfg.M[0], regime, cfg.seed)
    if cfg.m_t:
        return SamplingPlan.uniform(n, s, cfg.m_t[0], regime, cfg.seed)
    return None


def _emit(obj) -> None:
    print(json.dumps(ex._jsonable(obj), indent=2, sort_keys=True))


def write_series(path, X) -> None:
    """Write an ``n x T`` matrix as the time-series CSV (header of time indices)."""
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"t{t}" for t in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def write_coords(path, coords) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        for i, (a, b) in enumerate(coords):
            w.writerow([i, repr(float(a)), repr(float(b))])


def cmd_graph_build(args) -> int:
    cfg = _config(args)
    g = ex.build_graph(cfg)
    out = _out(cfg)
    gr.save_edge_list(g, out / "graph.csv")
    info = {"n": g.n, "edges": g.n_edges, "hash": g.content_hash(), "path": str(out / "graph.csv")}
    if g.coords is not None:
        write_coords(out / "coords.csv", g.coords)
        info["coords"] = str(out / "coords.csv")
    _emit(info)
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    g, _, sys = _system(cfg)
    rng = np.random.default_rng(cfg.seed)
    k = cfg.k
    x0 = random_bandlimited(sys.basis, k, rng)
    w = random_bandlimited(sys.basis, k, rng)
    traj = evolve(sys, x0, w)
    out = _out(cfg)
    gr.save_edge_list(g, out / "graph.csv")
    if g.coords is not None:
        write_coords(out / "coords.csv", g.coords)
    write_series(out / "series.csv", traj.T)
    truth = {"x0": x0, "w": w, "alpha": cfg.alpha, "k": k, "s": sys.s, "seed": cfg.seed}
    (out / "truth.json").write_text(json.dumps(ex._jsonable(truth)))
    info = {"n": sys.n, "s": sys.s, "k": k, "series": str(out / "series.csv"),
            "truth": str(out / "truth.json")}
    plan = _plan(cfg, sys.n, sys.s, Regime(cfg.regime[0]))
    if plan is not None and not args.no_measure:
        samples = draw_samples(plan, rng)
        meas = measure(traj, samples, cfg.sigma[0], rng, seed=cfg.seed)
        (out / "measurements.json").write_text(meas.to_json())
        info["measurements"] = str(out / "measurements.json")
        info["M"] = samples.total
    _emit(info)
    return 0


def cmd_coherence(args) -> int:
    cfg = _config(args)
    _, _, sys = _system(cfg)
    p = np.full(sys.n, 1.0 / sys.n)
    k, s = cfg.k, sys.s
    _emit({"k": k, "s": s, "distribution": "uniform",
           "nu_regime2": [coherence_regime2(sys.basis, sys.shift, k, t, p) for t in range(s)],
           "upper_bound": [coherence_upper_bound(sys.basis, sys.shift, k, t, p) for t in range(s)],
           "nu_regime1": coherence_regime1(sys.basis, sys.shift, k, s, p)})
    return 0


def cmd_complexity(args) -> int:
    cfg = _config(args)
    _, _, sys = _system(cfg)
    sb = stability_bounds(sys, cfg.k)
    res = {"c": sb.c, "C": sb.C, "k": cfg.k, "s": sys.s, "delta": cfg.delta, "eps": cfg.eps}
    for r in cfg.regime:
        m = required_samples(sys, cfg.k, Regime(r), cfg.delta, cfg.eps)
        res[f"regime{r}"] = {"m": m, "M": int(np.sum(m)) if int(r) == 2 else int(m[0]) * sys.s}
    _emit(res)
    return 0


def _plan_from_samples(samples, n) -> SamplingPlan:
    # uniform probabilities, as produced by simulate
    return SamplingPlan.uniform(n, samples.s, samples.counts.tolist() if samples.regime is Regime.TIME_VARYING
                                else int(samples.counts[0]), samples.regime)


def cmd_recover(args) -> int:
    cfg = _config(args)
    meas = Measurements.from_json(Path(args.measurements).read_text())
    _, L, sys = _system(cfg, s=meas.samples.s)
    if max((int(np.max(o)) for o in meas.samples.omega if len(o)), default=-1) >= sys.n:
        raise ConfigError(f"measurements reference nodes beyond n={sys.n}; pass the config used for simulate")
    plan = _plan_from_samples(meas.samples, sys.n)
    method = args.method or cfg.method[0]
    if method == "known_basis":
        res = recover_known_basis(meas, plan, sys, cfg.k, eps=cfg.eps)
    else:
        gamma = args.gamma if args.gamma is not None else (cfg.gamma[0] if cfg.gamma else None)
        if gamma is None:
            raise ConfigError("regularized recovery needs --gamma or a gamma list")
        res = recover_regularized(meas, plan, sys.A(), L, RegularizerPoly.power(cfg.g_degree), gamma,
                                  sys.s, tol=cfg.solver_tol, max_iters=cfg.solver_max_iters,
                                  strict_deterministic=cfg.solver_strict_deterministic)
    out = _out(cfg)
    (out / "recovery.json").write_text(res.to_json())
    info = {"method": method, "residual": res.residual, "path": str(out / "recovery.json"),
            "R": res.diagnostics["R"]}
    if args.truth:
        t = json.loads(Path(args.truth).read_text())
        truth = np.concatenate([t["x0"], t["w"]])
        if truth.size != 2 * sys.n:
            raise ConfigError(f"--truth has {truth.size // 2} nodes but the configured graph has {sys.n}; "
                              "pass the config used for simulate")
        rep = evaluate(res.w_aug_star, truth)
        info["metrics"] = {"mae": rep.mae, "mape": rep.mape, "re": rep.re}
        if meas.e is not None:
            bounds = check_error_bounds(res, truth, sys, cfg.k, delta=cfg.delta,
                                        g=RegularizerPoly.power(cfg.g_degree), gamma=res.diagnostics.get("gamma"))
            info["bounds"] = {c.name: {"lhs": c.lhs, "rhs": c.rhs, "satisfied": c.satisfied}
                              for c in bounds.checks}
    _emit(info)
    return 0


def cmd_experiment_synthetic(args) -> int:
    cfg = _config(args)
    run = ex.run_synthetic(cfg)
    files = ex.emit_results(run.records, cfg.output, cfg, run.audit)
    _emit({k: str(v) for k, v in files.items()})
    return 0


def cmd_experiment_real(args) -> int:
    cfg = _config(args)
    series = args.series or cfg.real_series
    coords = args.coords or cfg.real_coords
    if not series or not coords:
        raise ConfigError("experiment real needs --series and --coords (or real.series / real.coords)")
    X = ex.load_series(series)
    P = gr.load_coords(coords)
    run = ex.run_real(cfg, X, P)
    files = ex.emit_results(run.records, cfg.output, cfg, run.audit)
    _emit({k: str(v) for k, v in files.items()})
    return 0


def cmd_rip_check(args) -> int:
    cfg = _config(args)
    _, _, sys = _system(cfg)
    regime = Regime(cfg.regime[0])
    plan = _plan(cfg, sys.n, sys.s, regime)
    if plan is None:
        m = required_samples(sys, cfg.k, regime, cfg.delta, cfg.eps)
        plan = SamplingPlan.uniform(sys.n, sys.s, m.tolist() if regime is Regime.TIME_VARYING else int(m[0]),
                                    regime, cfg.seed)
    samples = draw_samples(plan, np.random.default_rng(cfg.seed))
    rep = rip_check(sys, cfg.k, plan, samples, args.trials, cfg.delta, np.random.default_rng(cfg.seed + 1))
    _emit({"c": rep.c, "C": rep.C, "delta": rep.delta, "m": plan.m, "exact_min": rep.exact_min,
           "exact_max": rep.exact_max, "sampled_min": rep.sampled_min, "sampled_max": rep.sampled_max,
           "delta_lower": rep.delta_lower, "delta_upper": rep.delta_upper, "passed": rep.passed})
    return 0 if rep.passed else 1


COMMANDS = {
    ("graph", "build"): cmd_graph_build,
    ("simulate",): cmd_simulate,
    ("coherence",): cmd_coherence,
    ("complexity",): cmd_complexity,
    ("recover",): cmd_recover,
    ("experiment", "synthetic"): cmd_experiment_synthetic,
    ("experiment", "real"): cmd_experiment_real,
    ("rip-check",): cmd_rip_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    key = (args.command,) + tuple(v for v in (getattr(args, "graph_command", None),
                                               getattr(args, "experiment_command", None)) if v)
    try:
        return COMMANDS[key](args)
    except (ConfigError, gr.GraphError, ValueError, OSError) as exc:
        print(f"dynsamp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
