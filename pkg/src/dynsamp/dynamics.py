"""Affine graph dynamics ``x_{t+1} = A x_t + w`` and the stacked embedding.

For a shift ``A = U diag(lam) U^T`` and bandlimited ``x0, w`` the state at
time ``t`` is ``U_k [Lam^t, Lambar^t] [U_k^T x0; U_k^T w]`` where
``Lambar^t = sum_{l<t} Lam^l``. Stacking ``t = 0..s-1`` gives the linear
embedding of ``w_aug = [x0; w]`` into ``R^{sn}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import ShiftSpectrum, SpectralBasis, band_residual

# below this distance from 1 the geometric sum is accumulated directly
_LAMBDA_ONE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AffineSystem:
    shift: ShiftSpectrum
    basis: SpectralBasis
    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"horizon s must be >= 1, got {self.s}")
        if self.shift.lam.shape[0] != self.basis.n:
            raise ValueError("shift spectrum and basis disagree on n")

    @property
    def n(self) -> int:
        return self.basis.n

    def A(self) -> np.ndarray:
        return self.shift.matrix(self.basis)


@dataclass(frozen=True)
class StabilityBounds:
    """Embedding constants ``c <= ||pi(v)||^2 / ||v||^2 <= C`` on the band.

    ``per_mode[j] = (smaller, larger)`` eigenvalue of the 2x2 Gram block of
    mode ``j``; ``blocks[j]`` is that block.
    """

    c: float
    C: float
    per_mode: np.ndarray
    blocks: np.ndarray


def lambda_bar(lam, t: int):
    """Geometric partial sum ``sum_{l=0}^{t-1} lam^l`` (elementwise; 0 for t = 0)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    lam = np.asarray(lam, dtype=float)
    near_one = np.abs(1.0 - lam) <= _LAMBDA_ONE_TOL
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # -expm1(t log lam) = 1 - lam^t without cancellation for lam > 0
        num = np.where(lam > 0, -np.expm1(t * np.log(np.where(lam > 0, lam, 1.0))), 1.0 - lam**t)
        closed = num / (1.0 - lam)
    if np.any(near_one):
        direct = np.zeros_like(lam)
        term = np.ones_like(lam)
        for _ in range(t):
            direct = direct + term
            term = term * lam
        closed = np.where(near_one, direct, closed)
    return closed if closed.ndim else float(closed)


def power_tables(lam, s: int) -> tuple[np.ndarray, np.ndarray]:
    """``(P, Q)`` of shape ``(s, len(lam))`` with ``P[t] = lam^t``, ``Q[t] = Lambar^t``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.arange(s)[:, None]
    P = lam[None, :] ** t
    Q = np.stack([lambda_bar(lam, int(tt)) for tt in range(s)]) if s else np.empty((0, lam.size))
    return P, Q


def evolve(sys: AffineSystem, x0, w) -> np.ndarray:
    """Trajectory ``[x_0, ..., x_{s-1}]`` as an ``(s, n)`` array, applying ``A`` spectrally."""
    x0 = np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    if x0.shape != (sys.n,) or w.shape != (sys.n,):
        raise ValueError(f"x0 and w must have shape ({sys.n},)")
    U, lam = sys.basis.U, sys.shift.lam
    traj = np.empty((sys.s, sys.n))
    x = x0
    for t in range(sys.s):
        traj[t] = x
        x = U @ (lam * (U.T @ x)) + w
    return traj


def evolve_with_operator(apply_A, x0, w, s: int) -> np.ndarray:
    """Same recurrence as :func:`evolve`, using only products ``apply_A(x)``."""
    x = np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    traj = np.empty((s, x.shape[0]))
    for t in range(s):
        traj[t] = x
        x = apply_A(x) + w
    return traj


def split_aug(w_aug, n: int) -> tuple[np.ndarray, np.ndarray]:
    w_aug = np.asarray(w_aug, dtype=float)
    if w_aug.shape != (2 * n,):
        raise ValueError(f"w_aug must have shape ({2 * n},), got {w_aug.shape}")
    return w_aug[:n], w_aug[n:]


def pi_matrix(sys: AffineSystem, k: int) -> np.ndarray:
    """Matrix of the embedding restricted to band coefficients.

    Shape ``(s*n, 2k)``: block row ``t`` is ``U_k [Lam_k^t, Lambar_k^t]``, so that
    ``pi(w_aug) = pi_matrix @ [U_k^T x0; U_k^T w]``.
    """
    Uk = sys.basis.Uk(k)
    P, Q = power_tables(sys.shift.lam[:k], sys.s)
    blocks = [np.hstack([Uk * P[t], Uk * Q[t]]) for t in range(sys.s)]
    return np.vstack(blocks)


def apply_pi(sys: AffineSystem, k: int, w_aug, tol: float = 1e-8) -> np.ndarray:
    """Stacked trajectory ``[x_0; ...; x_{s-1}]`` (length ``s*n``) of a bandlimited ``w_aug``."""
    x0, w = split_aug(w_aug, sys.n)
    for name, v in (("x0", x0), ("w", w)):
        r = band_residual(sys.basis, k, v)
        if r > tol:
            raise ValueError(f"{name} is not {k}-bandlimited (relative residual {r:.2e})")
    Uk = sys.basis.Uk(k)
    a, b = Uk.T @ x0, Uk.T @ w
    P, Q = power_tables(sys.shift.lam[:k], sys.s)
    return ((P * a + Q * b) @ Uk.T).ravel()


def gram_blocks(lam, s: int) -> np.ndarray:
    """Per-mode 2x2 blocks ``[[sum lam^2t, sum lam^t Lambar^t], [., sum (Lambar^t)^2]]``."""
    P, Q = power_tables(lam, s)
    a = np.sum(P * P, axis=0)
    b = np.sum(P * Q, axis=0)
    d = np.sum(Q * Q, axis=0)
    return np.stack([np.stack([a, b], -1), np.stack([b, d], -1)], -2)


def eig2x2(blocks: np.ndarray) -> np.ndarray:
    """Ascending eigenvalue pairs of symmetric 2x2 blocks via trace/determinant."""
    a, b, d = blocks[..., 0, 0], blocks[..., 0, 1], blocks[..., 1, 1]
    half_tr = 0.5 * (a + d)
    disc = np.sqrt(np.maximum(0.25 * (a - d) ** 2 + b * b, 0.0))
    hi = half_tr + disc
    # product form for the small root avoids cancellation when det << tr^2
    det = a * d - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(hi > 0, det / hi, half_tr - disc)
    return np.stack([np.maximum(lo, 0.0), hi], -1)


def stability_bounds(sys: AffineSystem, k: int) -> StabilityBounds:
    """Extreme eigenvalues of the per-mode Gram blocks over modes ``j <= k``."""
    if not 1 <= k <= sys.n:
        raise ValueError(f"bandwidth k must satisfy 1 <= k <= {sys.n}")
    blocks = gram_blocks(sys.shift.lam[:k], sys.s)
    ev = eig2x2(blocks)
    return StabilityBounds(float(ev[:, 0].min()), float(ev[:, 1].max()), ev, blocks)
