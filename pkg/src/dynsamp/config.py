"""Flat ``key = value`` experiment configuration with dotted keys.

Example::

    # graph
    graph.source = generator        # generator | edges | knn
    graph.generator = rgg           # rgg | grid
    graph.n = 500
    laplacian = normalized
    alpha = 30
    s = 10
    k = 5
    regime = 1, 2
    M = 20, 40, 80
    sigma = 0, 1e-7..1e-1           # decades
    gamma = 3^6..3^16               # integer powers
    method = known_basis, regularized
    trials = 50
    seed = 0

Lists are comma separated. ``a..b`` expands integer ranges, ``b^i..b^j``
expands integer powers of ``b`` and ``1e-7..1e-1`` expands decades.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph_source: str = "generator"
    graph_generator: str = "rgg"
    graph_n: int = 500
    graph_radius: float | None = None
    graph_rows: int = 20
    graph_cols: int = 25
    graph_seed: int = 0
    graph_path: str | None = None
    graph_coords: str | None = None
    graph_knn_k: int = 10
    laplacian: str = "normalized"
    alpha: float | str = 30.0
    s: list = field(default_factory=lambda: [10])
    k: int = 5
    regime: list = field(default_factory=lambda: [2])
    M: list | None = None
    m_t: list | None = None
    sigma: list = field(default_factory=lambda: [0.0])
    gamma: list = field(default_factory=list)
    g_degree: int = 4
    method: list = field(default_factory=lambda: ["known_basis"])
    trials: int = 50
    seed: int = 0
    output: str = "results"
    threads: int = 1
    delta: float = 0.5
    eps: float = 0.1
    success_threshold: float = 0.05
    solver_tol: float = 1e-10
    solver_max_iters: int | None = None
    solver_strict_deterministic: bool = True
    real_series: str | None = None
    real_coords: str | None = None
    real_train: int = 10
    real_steps: int | None = None
    real_rates: list = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)])
    real_energy: float = 0.9
    real_bandwidth: int | None = None
    real_laplacian: str = "combinatorial"
    real_alpha: float | str = "estimate"
    alpha_lo: float = 1e-3
    alpha_hi: float = 1e3
    alpha_grid_points: int = 61
    alpha_refine_iters: int = 40

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.graph_source not in ("generator", "edges", "knn"):
            raise ConfigError(f"graph.source must be generator, edges or knn, got {self.graph_source!r}")
        if self.graph_source == "edges" and not self.graph_path:
            raise ConfigError("graph.source = edges requires graph.path")
        if self.graph_source == "knn" and not self.graph_coords:
            raise ConfigError("graph.source = knn requires graph.coords")
        for key in ("graph_path", "graph_coords", "real_series", "real_coords"):
            v = getattr(self, key)
            if v and not Path(v).exists():
                raise ConfigError(f"{key.replace('_', '.', 1)}: file not found: {v}")
        for key in ("laplacian", "real_laplacian"):
            if getattr(self, key) not in ("normalized", "combinatorial"):
                raise ConfigError(f"{key.replace('_', '.', 1)} must be normalized or combinatorial, "
                                  f"got {getattr(self, key)!r}")
        for key in ("alpha", "real_alpha"):
            v = getattr(self, key)
            if isinstance(v, str) and v != "estimate":
                raise ConfigError(f"{key.replace('_', '.', 1)} must be a number or 'estimate', got {v!r}")
            if not isinstance(v, str) and not v > 0:
                raise ConfigError(f"{key.replace('_', '.', 1)} must be positive")
        if not 0 < self.real_energy <= 1:
            raise ConfigError("real.energy must lie in (0, 1]")
        if any(not 0 < r <= 1 for r in self.real_rates):
            raise ConfigError("real.rates must lie in (0, 1]")
        if self.real_train < 3:
            raise ConfigError("real.train must be >= 3")
        if any(int(s) < 1 for s in self.s):
            raise ConfigError("s must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if any(int(r) not in (1, 2) for r in self.regime):
            raise ConfigError("regime entries must be 1 or 2")
        if self.M is not None and self.m_t is not None:
            raise ConfigError("give either M or m_t, not both")
        if any(x < 0 for x in self.sigma):
            raise ConfigError("sigma must be nonnegative")
        if any(g <= 0 for g in self.gamma):
            raise ConfigError("gamma must be positive")
        bad = set(self.method) - {"known_basis", "regularized"}
        if bad:
            raise ConfigError(f"unknown method(s) {sorted(bad)}")
        if "regularized" in self.method and not self.gamma:
            raise ConfigError("method = regularized requires a gamma list")
        if self.trials < 1 or self.threads < 1:
            raise ConfigError("trials and threads must be >= 1")
        if not (0 < self.delta < 1 and 0 < self.eps < 1):
            raise ConfigError("delta and eps must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_FIELDS = {"s", "regime", "M", "m_t", "sigma", "gamma", "method", "real_rates"}
_INT_FIELDS = {"graph_n", "graph_rows", "graph_cols", "graph_seed", "graph_knn_k", "k", "g_degree",
               "trials", "seed", "threads", "solver_max_iters", "real_train", "real_steps",
               "real_bandwidth", "alpha_grid_points", "alpha_refine_iters"}
_INT_LISTS = {"s", "regime", "M", "m_t"}
_FLOAT_LISTS = {"sigma", "gamma", "real_rates"}
_POW_RANGE = re.compile(r"^\s*([0-9.]+)\^(-?\d+)\s*\.\.\s*\1\^(-?\d+)\s*$")
_INT_RANGE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")
_DECADE_RANGE = re.compile(r"^\s*1e(-?\d+)\s*\.\.\s*1e(-?\d+)\s*$")


def _number(tok: str) -> float:
    tok = tok.strip()
    if "^" in tok:
        base, exp = tok.split("^", 1)
        return float(base) ** int(exp)
    return float(tok)


def _expand(tok: str) -> list:
    if m := _POW_RANGE.match(tok):
        base, lo, hi = float(m.group(1)), int(m.group(2)), int(m.group(3))
        return [base**i for i in range(lo, hi + 1)]
    if m := _DECADE_RANGE.match(tok):
        lo, hi = int(m.group(1)), int(m.group(2))
        return [10.0**i for i in range(lo, hi + 1)]
    if m := _INT_RANGE.match(tok):
        return list(range(int(m.group(1)), int(m.group(2)) + 1))
    return [tok]


def _convert(name: str, raw: str):
    raw = raw.strip()
    if name in _LIST_FIELDS:
        items = []
        for tok in raw.split(","):
            if tok.strip():
                items.extend(_expand(tok))
        if name in _INT_LISTS:
            return [int(_number(str(x))) if isinstance(x, str) else int(x) for x in items]
        if name in _FLOAT_LISTS:
            return [_number(x) if isinstance(x, str) else float(x) for x in items]
        return [str(x).strip() for x in items]
    if raw.lower() in ("none", "null", ""):
        return None
    if name in _INT_FIELDS:
        return int(_number(raw))
    if name in ("alpha", "real_alpha"):
        return raw if raw == "estimate" else _number(raw)
    if name == "solver_strict_deterministic":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    default = _FIELDS[name].default
    if isinstance(default, float) or name == "graph_radius":
        return _number(raw)
    return raw


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        items.append((lineno, key.strip(), raw))
    for key, raw in (overrides or {}).items():
        items.append((None, key, str(raw)))
    for lineno, key, raw in items:
        name = key.replace(".", "_")
        if name not in _FIELDS:
            where = f"line {lineno}: " if lineno else ""
            raise ConfigError(f"{where}unknown key {key!r}")
        try:
            values[name] = _convert(name, raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    text = Path(path).read_text() if path else ""
    return parse_config_text(text, overrides)
