"""Random space-time sampling, coherence and the weighted sampling operator.

Two regimes are supported:

* ``Regime.FIXED``: one set of ``m`` nodes drawn from ``p_0`` and observed at
  every time step.
* ``Regime.TIME_VARYING``: ``m_t`` nodes drawn afresh from ``p_t`` at each
  time step.

Draws are with replacement and duplicates are kept as separate rows. Each
row ``(t, j)`` of the weighted operator applies
``1 / sqrt(m_t * p_t(omega_{j,t}))`` to ``x_t(omega_{j,t})``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .dynamics import AffineSystem, apply_pi, power_tables, stability_bounds
from .spectral import ShiftSpectrum, SpectralBasis


class Regime(enum.IntEnum):
    FIXED = 1
    TIME_VARYING = 2

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, Regime):
            return value
        key = str(value).strip().lower()
        aliases = {"1": cls.FIXED, "fixed": cls.FIXED, "2": cls.TIME_VARYING,
                   "time_varying": cls.TIME_VARYING, "timevarying": cls.TIME_VARYING}
        if key not in aliases:
            raise ValueError(f"unknown sampling regime {value!r}")
        return aliases[key]


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Sampling distributions ``P`` (``n x s``, one column per time) and counts ``m``."""

    regime: Regime
    P: np.ndarray
    m: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        regime = Regime.parse(self.regime)
        P = np.asarray(self.P, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        m = np.atleast_1d(np.asarray(self.m, dtype=np.int64))
        if m.size == 1 and P.shape[1] > 1:
            m = np.full(P.shape[1], int(m[0]))
        if m.shape != (P.shape[1],):
            raise ValueError(f"need one sample count per time step ({P.shape[1]}), got {m.size}")
        if np.any(m < 1):
            raise ValueError("sample counts must be >= 1")
        if np.any(P <= 0) or not np.all(np.isfinite(P)):
            raise ValueError("sampling probabilities must be finite and strictly positive")
        if np.any(np.abs(P.sum(axis=0) - 1.0) > 1e-12):
            raise ValueError("each sampling distribution must sum to 1")
        if regime is Regime.FIXED:
            if np.any(m != m[0]):
                raise ValueError("fixed regime requires equal sample counts")
            if np.any(P != P[:, :1]):
                raise ValueError("fixed regime requires identical distributions")
        object.__setattr__(self, "regime", regime)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "m", m)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def s(self) -> int:
        return self.P.shape[1]

    @property
    def total(self) -> int:
        return int(self.m.sum())

    @classmethod
    def uniform(cls, n: int, s: int, m, regime=Regime.TIME_VARYING, seed=None) -> "SamplingPlan":
        return cls(regime, np.full((n, s), 1.0 / n), m, seed)

    @classmethod
    def equal_split(cls, n: int, s: int, M: int, regime=Regime.TIME_VARYING, seed=None) -> "SamplingPlan":
        """Uniform plan with ``m_t = M / s`` at every time step."""
        if M % s:
            raise ValueError(f"total samples M={M} is not divisible by s={s}")
        return cls.uniform(n, s, M // s, regime, seed)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Drawn node indices, one integer array per time step."""

    omega: tuple
    regime: Regime = Regime.TIME_VARYING

    def __post_init__(self):
        omega = tuple(np.asarray(o, dtype=np.int64) for o in self.omega)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "regime", Regime.parse(self.regime))

    @property
    def s(self) -> int:
        return len(self.omega)

    @property
    def counts(self) -> np.ndarray:
        return np.array([o.size for o in self.omega], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Time index and node index of every measurement row, in order."""
        t = np.repeat(np.arange(self.s), self.counts)
        v = np.concatenate(self.omega) if self.s else np.empty(0, dtype=np.int64)
        return t, v

    def to_dict(self) -> dict:
        return {"regime": int(self.regime), "omega": [o.tolist() for o in self.omega]}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleSet":
        return cls(tuple(d["omega"]), d.get("regime", Regime.TIME_VARYING))


@dataclass(frozen=True, eq=False)
class Measurements:
    """Observed values ``z`` (grouped by time), the noise level and realised noise."""

    z: np.ndarray
    samples: SampleSet
    sigma: float = 0.0
    e: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.shape != (self.samples.total,):
            raise ValueError(f"expected {self.samples.total} measurements, got {z.shape}")
        object.__setattr__(self, "z", z)
        if self.e is not None:
            object.__setattr__(self, "e", np.asarray(self.e, dtype=float))

    def to_json(self) -> str:
        d = {"omega": [o.tolist() for o in self.samples.omega], "z": self.z.tolist(),
             "sigma": self.sigma, "seed": self.seed, "regime": int(self.samples.regime)}
        if self.e is not None:
            d["e"] = self.e.tolist()
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "Measurements":
        d = json.loads(text)
        samples = SampleSet(tuple(d["omega"]), d.get("regime", Regime.TIME_VARYING))
        e = d.get("e")
        return cls(np.asarray(d["z"], dtype=float), samples, float(d.get("sigma", 0.0)),
                   None if e is None else np.asarray(e), d.get("seed"))


@dataclass(frozen=True)
class CoherenceReport:
    regime1: float | None
    regime2: np.ndarray
    upper_bound: np.ndarray


def draw_samples(plan: SamplingPlan, rng=None) -> SampleSet:
    """Draw node indices with replacement according to ``plan``.

    Uses ``plan.seed`` when ``rng`` is not given.
    """
    rng = np.random.default_rng(plan.seed if rng is None else rng)
    n = plan.n
    if plan.regime is Regime.FIXED:
        omega = rng.choice(n, size=int(plan.m[0]), p=plan.P[:, 0])
        return SampleSet(tuple(omega.copy() for _ in range(plan.s)), Regime.FIXED)
    return SampleSet(tuple(rng.choice(n, size=int(mt), p=plan.P[:, t]) for t, mt in enumerate(plan.m)),
                     Regime.TIME_VARYING)


def _check_p(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"distribution must have shape ({n},)")
    if np.any(p <= 0):
        raise ValueError("coherence needs strictly positive probabilities")
    return p


def coherence_regime2(basis: SpectralBasis, shift: ShiftSpectrum, k: int, t: int, p) -> float:
    """``max_l ||delta_l^T U_k [Lam_k^t, Lambar_k^t]||^2 / p(l)``."""
    p = _check_p(p, basis.n)
    P, Q = power_tables(shift.lam[:k], t + 1)
    mode_gain = P[t] ** 2 + Q[t] ** 2
    row = (basis.Uk(k) ** 2) @ mode_gain
    return float(np.max(row / p))


def coherence_upper_bound(basis: SpectralBasis, shift: ShiftSpectrum, k: int, t: int, p) -> float:
    """Separable bound: ``max_i ||U_k^T delta_i||^2 / p(i) * max_j (lam_j^2t + Lambar_j(t)^2)``."""
    p = _check_p(p, basis.n)
    P, Q = power_tables(shift.lam[:k], t + 1)
    leverage = np.sum(basis.Uk(k) ** 2, axis=1)
    return float(np.max(leverage / p) * np.max(P[t] ** 2 + Q[t] ** 2))


def coherence_regime1(basis: SpectralBasis, shift: ShiftSpectrum, k: int, s: int, p0,
                      method: str = "gram", chunk: int = 512) -> float:
    """``max_l || sum_t a_t a_t^T ||_2 / p0(l)`` with ``a_t = [Lam_k^t u; Lambar_k^t u]``, ``u = U_k^T delta_l``.

    ``method="gram"`` takes the top eigenvalue of the ``s x s`` Gram matrix of
    the ``a_t`` (same nonzero spectrum); ``method="dense"`` assembles the
    ``2k x 2k`` sum.
    """
    p0 = _check_p(p0, basis.n)
    if s < 1:
        raise ValueError("s must be >= 1")
    P, Q = power_tables(shift.lam[:k], s)
    Uk = basis.Uk(k)
    best = 0.0
    for start in range(0, basis.n, chunk):
        u = Uk[start:start + chunk]
        if method == "gram":
            u2 = u * u
            G = np.einsum("tj,lj,rj->ltr", P, u2, P) + np.einsum("tj,lj,rj->ltr", Q, u2, Q)
            top = np.linalg.eigvalsh(G)[:, -1]
        elif method == "dense":
            # a[l, t] = [P[t] * u_l, Q[t] * u_l]
            a = np.concatenate([P[None] * u[:, None], Q[None] * u[:, None]], axis=2)
            top = np.linalg.eigvalsh(np.einsum("lti,ltj->lij", a, a))[:, -1]
        else:
            raise ValueError(f"unknown method {method!r}")
        best = max(best, float(np.max(top / p0[start:start + chunk])))
    return best


def coherence_report(sys: AffineSystem, k: int, plan: SamplingPlan) -> CoherenceReport:
    nu2 = np.array([coherence_regime2(sys.basis, sys.shift, k, t, plan.P[:, t]) for t in range(sys.s)])
    ub = np.array([coherence_upper_bound(sys.basis, sys.shift, k, t, plan.P[:, t]) for t in range(sys.s)])
    nu1 = coherence_regime1(sys.basis, sys.shift, k, sys.s, plan.P[:, 0]) if plan.regime is Regime.FIXED else None
    return CoherenceReport(nu1, nu2, ub)


def sample_complexity(nu: float, c: float, k: int, delta: float, eps: float) -> int:
    """Sufficient count ``ceil(3 nu / (c delta^2) * log(4k / eps))`` for the RIP event."""
    if not c > 0:
        raise ValueError("stability constant c must be positive (degenerate horizon s = 1?)")
    if not (0 < delta < 1 and 0 < eps < 1):
        raise ValueError("delta and eps must lie in (0, 1)")
    return int(math.ceil(3.0 * nu / (c * delta**2) * math.log(4.0 * k / eps)))


def backsolve_delta(m: float, nu: float, c: float, k: int, eps: float) -> float:
    """The ``delta`` for which ``m`` samples meet the complexity bound exactly."""
    return math.sqrt(3.0 * nu * math.log(4.0 * k / eps) / (c * m))


def required_samples(sys: AffineSystem, k: int, regime, delta: float, eps: float, P=None) -> np.ndarray:
    """Per-time sample counts implied by the complexity bound (uniform ``P`` by default).

    Regime 1 returns the single ``m`` repeated ``s`` times.
    """
    regime = Regime.parse(regime)
    if P is None:
        P = np.full((sys.n, sys.s), 1.0 / sys.n)
    c = stability_bounds(sys, k).c
    if regime is Regime.FIXED:
        nu = coherence_regime1(sys.basis, sys.shift, k, sys.s, P[:, 0])
        return np.full(sys.s, sample_complexity(nu, c, k, delta, eps), dtype=np.int64)
    return np.array([sample_complexity(coherence_regime2(sys.basis, sys.shift, k, t, P[:, t]), c, k, delta, eps)
                     for t in range(sys.s)], dtype=np.int64)


def measure(traj, samples: SampleSet, sigma: float = 0.0, rng=None, seed=None) -> Measurements:
    """``z(t, j) = x_t(omega_{j,t}) + e`` with ``e ~ N(0, sigma^2)``."""
    traj = np.asarray(traj, dtype=float)
    if traj.shape[0] != samples.s:
        raise ValueError(f"trajectory has {traj.shape[0]} steps, sample set has {samples.s}")
    t, v = samples.rows()
    if v.size and (v.min() < 0 or v.max() >= traj.shape[1]):
        raise IndexError("sample index out of range")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    clean = traj[t, v]
    if sigma > 0:
        e = np.random.default_rng(rng).normal(0.0, sigma, size=clean.shape)
    else:
        e = np.zeros_like(clean)
    return Measurements(clean + e, samples, float(sigma), e, seed)


class WeightedOperator:
    """Matrix-free weighted sampling operator from ``R^{sn}`` to ``R^{sum m_t}``."""

    def __init__(self, samples: SampleSet, plan: SamplingPlan):
        if samples.s != plan.s:
            raise ValueError("sample set and plan disagree on s")
        if np.any(samples.counts != plan.m):
            raise ValueError("sample set counts do not match the plan")
        self.samples = samples
        self.n = plan.n
        self.s = plan.s
        self.t_idx, self.v_idx = samples.rows()
        probs = plan.P[self.v_idx, self.t_idx]
        self.scale = 1.0 / np.sqrt(plan.m[self.t_idx] * probs)
        self.shape = (samples.total, self.s * self.n)
        self._flat = self.t_idx * self.n + self.v_idx

    def weight(self, y) -> np.ndarray:
        """Apply only the time/probability weights to a measurement-space vector."""
        return self.scale * np.asarray(y, dtype=float)

    def matvec(self, x) -> np.ndarray:
        return self.scale * np.asarray(x, dtype=float).reshape(-1)[self._flat]

    def rmatvec(self, y) -> np.ndarray:
        out = np.zeros(self.s * self.n)
        np.add.at(out, self._flat, self.scale * np.asarray(y, dtype=float))
        return out

    def to_sparse(self) -> sp.csr_matrix:
        rows = np.arange(self.shape[0])
        return sp.csr_matrix((self.scale, (rows, self._flat)), shape=self.shape)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec, dtype=float)

    def norm(self) -> float:
        """Exact spectral norm.

        Rows hitting distinct space-time points are orthogonal; ``c`` repeats
        of node ``v`` at time ``t`` form a rank-one block of squared norm
        ``c / (m_t p_t(v))``.
        """
        if self.shape[0] == 0:
            return 0.0
        flat, inv = np.unique(self._flat, return_inverse=True)
        sq = np.zeros(flat.size)
        np.add.at(sq, inv, self.scale**2)
        return float(np.sqrt(sq.max()))


def design_matrix(sys: AffineSystem, k: int, samples: SampleSet, plan: SamplingPlan) -> np.ndarray:
    """Weighted sampled embedding in band coordinates, shape ``(sum m_t, 2k)``.

    Row ``(t, j)`` is ``delta_{omega}^T U_k [Lam_k^t, Lambar_k^t] / sqrt(m_t p_t(omega))``.
    """
    op = WeightedOperator(samples, plan)
    P, Q = power_tables(sys.shift.lam[:k], sys.s)
    Urows = sys.basis.Uk(k)[op.v_idx]
    return op.scale[:, None] * np.hstack([Urows * P[op.t_idx], Urows * Q[op.t_idx]])


@dataclass
class RipReport:
    """Observed ``||WPS pi(w)||^2 / ||w||^2`` against ``c`` and ``C``.

    ``sampled_*`` come from random bandlimited trials; ``exact_*`` are the
    extreme eigenvalues of the band-restricted Gram matrix, i.e. the true
    extremes over the whole band.
    """

    c: float
    C: float
    sampled_min: float
    sampled_max: float
    exact_min: float
    exact_max: float
    delta: float | None = None
    trials: int = 0

    @property
    def delta_lower(self) -> float:
        return 1.0 - self.exact_min / self.c if self.c > 0 else math.inf

    @property
    def delta_upper(self) -> float:
        return self.exact_max / self.C - 1.0

    @property
    def sampled_delta_lower(self) -> float:
        return 1.0 - self.sampled_min / self.c if self.c > 0 else math.inf

    @property
    def sampled_delta_upper(self) -> float:
        return self.sampled_max / self.C - 1.0

    @property
    def passed(self) -> bool | None:
        if self.delta is None:
            return None
        return bool(self.exact_min >= (1 - self.delta) * self.c and self.exact_max <= (1 + self.delta) * self.C)


def rip_check(sys: AffineSystem, k: int, plan: SamplingPlan, samples: SampleSet, trials: int = 100,
              delta: float | None = None, rng=None) -> RipReport:
    """Empirical restricted-isometry check of the weighted sampled embedding."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    bounds = stability_bounds(sys, k)
    op = WeightedOperator(samples, plan)
    Uk = sys.basis.Uk(k)
    ratios = np.empty(trials)
    for i in range(trials):
        w_aug = np.concatenate([Uk @ rng.standard_normal(k), Uk @ rng.standard_normal(k)])
        y = op.matvec(apply_pi(sys, k, w_aug))
        ratios[i] = (y @ y) / (w_aug @ w_aug)
    B = design_matrix(sys, k, samples, plan)
    ev = np.linalg.eigvalsh(B.T @ B)
    return RipReport(bounds.c, bounds.C, float(ratios.min()), float(ratios.max()),
                     float(max(ev[0], 0.0)), float(ev[-1]), delta, trials)
