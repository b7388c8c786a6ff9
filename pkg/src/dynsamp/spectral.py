"""Graph Fourier basis, bandlimited signals and heat-kernel shift operators."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

_CACHE_MAGIC = b"DSBASIS1"


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Orthonormal eigenvectors ``U`` (columns) and ascending eigenvalues ``theta``."""

    U: np.ndarray
    theta: np.ndarray

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def Uk(self, k: int) -> np.ndarray:
        _check_band(k, self.n)
        return self.U[:, :k]

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.theta) @ self.U.T


@dataclass(frozen=True, eq=False)
class ShiftSpectrum:
    """Eigenvalues of a shift operator ``A = U diag(lam) U^T``, aligned with ``theta``."""

    lam: np.ndarray
    alpha: float | None = None

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if not np.all(np.isfinite(lam)):
            raise ValueError("shift eigenvalues must be finite")
        object.__setattr__(self, "lam", lam)

    def matrix(self, basis: SpectralBasis) -> np.ndarray:
        return (basis.U * self.lam) @ basis.U.T


def _check_band(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"bandwidth k must satisfy 1 <= k <= {n}, got {k}")


def _fix_signs(U: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive (first one on ties)
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def eigendecompose(L, sym_tol: float = 1e-10) -> SpectralBasis:
    """Dense symmetric eigendecomposition ``L = U diag(theta) U^T``.

    Eigenvalues within 1e-12 of zero are snapped to exactly zero, and each
    eigenvector is signed so that its largest-magnitude entry is positive.
    """
    L = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ValueError("matrix has non-finite entries")
    asym = np.max(np.abs(L - L.T)) if L.size else 0.0
    if asym > sym_tol:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    try:
        theta, U = sla.eigh(0.5 * (L + L.T))
    except sla.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    theta = np.where(np.abs(theta) < 1e-12, 0.0, theta)
    return SpectralBasis(_fix_signs(U), theta)


def save_basis(basis: SpectralBasis, path) -> None:
    """Binary cache: magic, int64 ``n``, ``U`` row-major float64, then ``theta``."""
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(np.int64(basis.n).tobytes())
        fh.write(np.ascontiguousarray(basis.U, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.theta, dtype="<f8").tobytes())


def load_basis(path) -> SpectralBasis:
    raw = Path(path).read_bytes()
    if raw[:8] != _CACHE_MAGIC:
        raise ValueError(f"{path}: not a basis cache file")
    n = int(np.frombuffer(raw, dtype="<i8", count=1, offset=8)[0])
    body = np.frombuffer(raw, dtype="<f8", offset=16)
    if body.size != n * n + n:
        raise ValueError(f"{path}: truncated basis cache")
    return SpectralBasis(body[: n * n].reshape(n, n).copy(), body[n * n :].copy())


def cached_eigendecompose(L, key: str, cache_dir) -> SpectralBasis:
    """Eigendecompose ``L``, reading/writing ``<cache_dir>/<key>.basis``."""
    path = Path(cache_dir) / f"{key}.basis"
    if path.exists():
        return load_basis(path)
    basis = eigendecompose(L)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_basis(basis, path)
    return basis


def gft(basis: SpectralBasis, k: int, x) -> np.ndarray:
    """Band-restricted graph Fourier transform ``U_k^T x``."""
    return basis.Uk(k).T @ np.asarray(x, dtype=float)


def igft(basis: SpectralBasis, k: int, xhat) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=float)
    if xhat.shape[0] != k:
        raise ValueError(f"expected {k} coefficients, got {xhat.shape[0]}")
    return basis.Uk(k) @ xhat


def band_residual(basis: SpectralBasis, k: int, x) -> float:
    """Relative off-band energy ``||(I - U_k U_k^T) x|| / ||x||`` (0 for x = 0)."""
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0:
        return 0.0
    Uk = basis.Uk(k)
    return float(np.linalg.norm(x - Uk @ (Uk.T @ x)) / nx)


def random_bandlimited(basis: SpectralBasis, k: int, rng) -> np.ndarray:
    """``U_k c`` with ``c`` i.i.d. standard normal."""
    rng = np.random.default_rng(rng)
    return basis.Uk(k) @ rng.standard_normal(k)


def bandwidth_for_energy(basis: SpectralBasis, signals, fraction: float = 0.9) -> int:
    """Smallest ``k`` whose first ``k`` modes hold ``fraction`` of the total energy."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    X = np.asarray(signals, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("need at least one signal")
    if X.shape[1] != basis.n and X.shape[0] == basis.n:
        X = X.T
    total = float(np.sum(X**2))
    if total == 0:
        raise ValueError("all signals are zero")
    per_mode = np.sum((X @ basis.U) ** 2, axis=0)
    cum = np.cumsum(per_mode)
    # relative slack absorbs roundoff when fraction == 1
    hit = np.flatnonzero(cum >= fraction * total * (1 - 1e-12))
    return int(hit[0]) + 1 if hit.size else basis.n


def shift_from_heat(basis: SpectralBasis, alpha: float) -> ShiftSpectrum:
    """Spectrum of ``A = exp(-alpha L)``."""
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    return ShiftSpectrum(np.exp(-alpha * basis.theta), float(alpha))
