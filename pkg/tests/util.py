import numpy as np

from dynsamp import AffineSystem, eigendecompose, random_geometric_graph, shift_from_heat
from dynsamp.graph import laplacian


def random_system(n, s, alpha=None, seed=0, kind="normalized"):
    """Random geometric graph system; returns ``(sys, L)`` with dense ``L``."""
    rng = np.random.default_rng(seed)
    g = random_geometric_graph(n, seed=int(rng.integers(2**31)))
    L = laplacian(g, kind, dense=True)
    basis = eigendecompose(L)
    alpha = float(rng.uniform(0.5, 30)) if alpha is None else alpha
    return AffineSystem(shift_from_heat(basis, alpha), basis, s), L
