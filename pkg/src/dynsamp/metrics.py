"""Reconstruction error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ground-truth entries smaller than this are skipped by MAPE
MAPE_ZERO_GUARD = 1e-12


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mape: float
    re: float
    n_eval: int
    excluded: int


def _pair(x_star, x):
    x_star = np.asarray(x_star, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if x_star.shape != x.shape:
        raise ValueError(f"length mismatch: {x_star.size} vs {x.size}")
    return x_star, x


def mae(x_star, x) -> float:
    x_star, x = _pair(x_star, x)
    return float(np.mean(np.abs(x_star - x)))


def _mape(x_star, x):
    keep = np.abs(x) >= MAPE_ZERO_GUARD
    if not keep.any():
        return float("nan"), int((~keep).sum())
    return float(np.mean(np.abs((x_star[keep] - x[keep]) / x[keep]))), int((~keep).sum())


def mape(x_star, x) -> float:
    """Mean absolute percentage error (as a fraction), skipping zero ground truth."""
    return _mape(*_pair(x_star, x))[0]


def relative_error(x_star, x) -> float:
    x_star, x = _pair(x_star, x)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ValueError("relative error undefined for a zero ground truth")
    return float(np.linalg.norm(x_star - x) / nx)


def evaluate(x_star, x) -> MetricReport:
    x_star, x = _pair(x_star, x)
    m, excluded = _mape(x_star, x)
    return MetricReport(mae(x_star, x), m, relative_error(x_star, x), x.size, excluded)
