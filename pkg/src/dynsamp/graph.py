"""Weighted undirected graphs and their Laplacian / diffusion operators."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

# Operators are returned dense below this size, sparse (CSR) at or above it.
DENSE_LIMIT = 512


class GraphError(ValueError):
    """Raised when a graph cannot be constructed or violates its invariants."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected weighted graph.

    Parameters
    ----------
    weights : scipy.sparse matrix or ndarray
        Symmetric nonnegative ``n x n`` adjacency with zero diagonal. Stored
        internally as CSR.
    coords : ndarray, optional
        ``n x 2`` node coordinates.
    """

    weights: sp.csr_matrix
    coords: np.ndarray | None = None

    def __post_init__(self):
        W = sp.csr_matrix(self.weights, dtype=float)
        W.sum_duplicates()
        W.eliminate_zeros()
        W.sort_indices()
        if W.shape[0] != W.shape[1]:
            raise GraphError(f"adjacency must be square, got {W.shape}")
        if W.nnz and not np.all(np.isfinite(W.data)):
            raise GraphError("adjacency has non-finite entries")
        if W.nnz and W.data.min() < 0:
            raise GraphError("adjacency has negative weights")
        if W.diagonal().any():
            raise GraphError("adjacency has self-loops")
        if (W != W.T).nnz:
            raise GraphError("adjacency is not symmetric")
        deg = np.asarray(W.sum(axis=1)).ravel()
        isolated = np.flatnonzero(deg <= 0)
        if isolated.size:
            raise GraphError(f"isolated nodes: {isolated[:10].tolist()}")
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=float)
            if coords.shape != (W.shape[0], 2):
                raise GraphError(f"coords must have shape ({W.shape[0]}, 2)")
            object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", W)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    @property
    def n_edges(self) -> int:
        return self.weights.nnz // 2

    def dense(self) -> np.ndarray:
        return self.weights.toarray()

    def edges(self) -> list[tuple[int, int, float]]:
        """Undirected edges ``(i, j, weight)`` with ``i < j``, sorted."""
        upper = sp.triu(self.weights, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[o]), int(upper.col[o]), float(upper.data[o])) for o in order]

    def content_hash(self) -> str:
        """SHA-256 of the canonical CSR arrays; used as a cache key."""
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        for arr in (self.weights.indptr, self.weights.indices):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.weights.data, dtype=np.float64).tobytes())
        return h.hexdigest()


def _maybe_dense(M: sp.spmatrix, dense: bool | None):
    if dense is None:
        dense = M.shape[0] < DENSE_LIMIT
    return M.toarray() if dense else sp.csr_matrix(M)


def from_dense(W, coords=None) -> Graph:
    return Graph(sp.csr_matrix(np.asarray(W, dtype=float)), coords)


def load_edge_list(path, n: int | None = None) -> Graph:
    """Read an ``i,j,weight`` edge list with 0-based node ids.

    A non-numeric first row is treated as a header. Each edge is mirrored;
    an edge listed twice (in either orientation) must carry the same weight
    to within 1e-12 relative.
    """
    rows: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or all(not f.strip() for f in raw):
                continue
            if len(raw) != 3:
                raise GraphError(f"{path}:{lineno}: expected 3 fields, got {len(raw)}")
            try:
                i, j, w = int(raw[0]), int(raw[1]), float(raw[2])
            except ValueError:
                if lineno == 1:
                    continue
                raise GraphError(f"{path}:{lineno}: malformed row {raw!r}") from None
            if i < 0 or j < 0:
                raise GraphError(f"{path}:{lineno}: negative node id")
            if i == j:
                raise GraphError(f"{path}:{lineno}: self-loop on node {i}")
            if not np.isfinite(w) or w <= 0:
                raise GraphError(f"{path}:{lineno}: weight must be positive, got {w}")
            key = (min(i, j), max(i, j))
            if key in rows:
                prev = rows[key]
                if abs(prev - w) > 1e-12 * max(abs(prev), abs(w)):
                    raise GraphError(
                        f"{path}:{lineno}: conflicting weights {prev} and {w} for edge {key}"
                    )
                continue
            rows[key] = w
    if n is None:
        n = 1 + max((max(k) for k in rows), default=-1)
    if any(max(k) >= n for k in rows):
        raise GraphError(f"node id out of range for n={n}")
    if rows:
        ij = np.array(list(rows.keys()))
        w = np.array(list(rows.values()))
        I = np.concatenate([ij[:, 0], ij[:, 1]])
        J = np.concatenate([ij[:, 1], ij[:, 0]])
        W = sp.csr_matrix((np.concatenate([w, w]), (I, J)), shape=(n, n))
    else:
        W = sp.csr_matrix((n, n))
    return Graph(W)


def save_edge_list(graph: Graph, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "weight"])
        for i, j, w in graph.edges():
            writer.writerow([i, j, repr(w)])


def load_coords(path) -> np.ndarray:
    """Read an ``id,lat,lon`` CSV (header required; ids must be 0..n-1)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["id", "lat", "lon"]:
            raise GraphError(f"{path}: expected header 'id,lat,lon', got {header!r}")
        ids, pts = [], []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            try:
                ids.append(int(raw[0]))
                pts.append((float(raw[1]), float(raw[2])))
            except (ValueError, IndexError):
                raise GraphError(f"{path}:{lineno}: malformed row {raw!r}") from None
    ids = np.asarray(ids)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise GraphError(f"{path}: node ids must be contiguous 0..n-1")
    coords = np.empty((len(ids), 2))
    coords[ids] = pts
    return coords


def _gaussian_graph(coords: np.ndarray, I: np.ndarray, J: np.ndarray) -> Graph:
    """Gaussian-kernel weights on undirected edges (I<J); sigma = mean edge length."""
    n = coords.shape[0]
    d = np.linalg.norm(coords[I] - coords[J], axis=1)
    sigma = d.mean()
    if not sigma > 0:
        raise GraphError("all edges have zero length; kernel width is undefined")
    w = np.exp(-(d**2) / sigma**2)
    W = sp.csr_matrix((np.concatenate([w, w]), (np.concatenate([I, J]), np.concatenate([J, I]))), shape=(n, n))
    return Graph(W, coords)


def build_knn_graph(coords, k: int, chunk: int = 1024) -> Graph:
    """k-nearest-neighbour graph with Gaussian edge weights.

    An edge is kept when either endpoint lists the other among its ``k``
    nearest neighbours (Euclidean, planar). Distance ties are broken by the
    lower node index. Weights are ``exp(-d^2 / sigma^2)`` with ``sigma`` the
    mean length over undirected edges, each edge counted once.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise GraphError("coords must be an n x 2 array")
    n = coords.shape[0]
    if k < 1 or n < k + 1:
        raise GraphError(f"need 1 <= k < n, got k={k}, n={n}")
    if not np.all(np.isfinite(coords)):
        raise GraphError("coords must be finite")
    nbrs = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        D = cdist(coords[start:stop], coords)
        D[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps lower index first among equal distances
        nbrs[start:stop] = np.argsort(D, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    pairs = np.unique(np.stack([np.minimum(rows, cols), np.maximum(rows, cols)], axis=1), axis=0)
    return _gaussian_graph(coords, pairs[:, 0], pairs[:, 1])


def grid_graph(rows: int, cols: int) -> Graph:
    """2-D lattice with unit weights; node ``r * cols + c``."""
    if rows * cols < 2:
        raise GraphError("grid needs at least two nodes")
    idx = np.arange(rows * cols).reshape(rows, cols)
    I = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    J = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    w = np.ones(I.size)
    W = sp.csr_matrix((np.concatenate([w, w]), (np.concatenate([I, J]), np.concatenate([J, I]))), shape=(idx.size,) * 2)
    yy, xx = np.divmod(np.arange(idx.size), cols)
    return Graph(W, np.column_stack([xx, yy]).astype(float))


def random_geometric_graph(n: int, radius: float | None = None, seed=None, max_tries: int = 100) -> Graph:
    """Random geometric graph on the unit square with Gaussian edge weights.

    Points within ``radius`` are joined. The default radius is
    ``sqrt(2 log(n) / n)``, comfortably above the connectivity threshold.
    Points are redrawn (same RNG stream) until the graph is connected.
    """
    from scipy.sparse.csgraph import connected_components

    if radius is None:
        radius = float(np.sqrt(2.0 * np.log(n) / n))
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        pts = rng.random((n, 2))
        D = cdist(pts, pts)
        I, J = np.nonzero(np.triu(D <= radius, k=1))
        if I.size == 0:
            continue
        A = sp.csr_matrix((np.ones(I.size), (I, J)), shape=(n, n))
        if connected_components(A, directed=False)[0] == 1:
            return _gaussian_graph(pts, I, J)
    raise GraphError(f"no connected geometric graph after {max_tries} draws (radius={radius})")


def normalized_diffusion(g: Graph, dense: bool | None = None):
    """``D^{-1/2} W D^{-1/2}``."""
    dis = sp.diags(1.0 / np.sqrt(g.degrees))
    return _maybe_dense(dis @ g.weights @ dis, dense)


def normalized_laplacian(g: Graph, dense: bool | None = None):
    """``I - D^{-1/2} W D^{-1/2}``."""
    dis = sp.diags(1.0 / np.sqrt(g.degrees))
    return _maybe_dense(sp.identity(g.n, format="csr") - dis @ g.weights @ dis, dense)


def combinatorial_laplacian(g: Graph, dense: bool | None = None):
    """``D - W``."""
    return _maybe_dense(sp.diags(g.degrees) - g.weights, dense)


def laplacian(g: Graph, kind: str = "normalized", dense: bool | None = None):
    if kind == "normalized":
        return normalized_laplacian(g, dense)
    if kind == "combinatorial":
        return combinatorial_laplacian(g, dense)
    raise ValueError(f"unknown Laplacian kind {kind!r}")
