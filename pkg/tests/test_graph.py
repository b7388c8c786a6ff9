import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsamp import graph as gr


def path_graph(n, w=1.0):
    W = np.zeros((n, n))
    for i in range(n - 1):
        W[i, i + 1] = W[i + 1, i] = w
    return gr.from_dense(W)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_edge(tmp_path):
    g = gr.load_edge_list(write(tmp_path, "e.csv", "0,1,1.0\n"), n=2)
    np.testing.assert_array_equal(g.dense(), [[0, 1], [1, 0]])


def test_degrees_from_rows(tmp_path):
    g = gr.load_edge_list(write(tmp_path, "e.csv", "i,j,weight\n0,1,2.0\n1,2,3.0\n"), n=3)
    np.testing.assert_array_equal(g.degrees, [2, 5, 3])


def test_path_degrees():
    np.testing.assert_array_equal(path_graph(4).degrees, [1, 2, 2, 1])


@pytest.mark.parametrize("text, msg", [
    ("0,1\n", "expected 3 fields"),
    ("0,1,1\n1,x,2\n", "malformed"),
    ("0,0,1\n", "self-loop"),
    ("0,1,1\n1,0,2\n", "conflicting"),
])
def test_edge_list_errors(tmp_path, text, msg):
    with pytest.raises(gr.GraphError, match=msg):
        gr.load_edge_list(write(tmp_path, "e.csv", text))


def test_isolated_node_after_load(tmp_path):
    with pytest.raises(gr.GraphError, match="isolated"):
        gr.load_edge_list(write(tmp_path, "e.csv", "0,1,1\n"), n=3)


def test_duplicate_edge_same_weight_ok(tmp_path):
    g = gr.load_edge_list(write(tmp_path, "e.csv", "0,1,1.5\n1,0,1.5\n"))
    assert g.n_edges == 1


def test_edge_list_roundtrip(tmp_path):
    g = gr.random_geometric_graph(40, seed=3)
    gr.save_edge_list(g, tmp_path / "g.csv")
    h = gr.load_edge_list(tmp_path / "g.csv", n=g.n)
    assert h.content_hash() == g.content_hash()


def test_graph_invariants_rejected():
    with pytest.raises(gr.GraphError):
        gr.from_dense([[0, 1], [2, 0]])
    with pytest.raises(gr.GraphError):
        gr.from_dense([[1, 1], [1, 0]])
    with pytest.raises(gr.GraphError):
        gr.from_dense([[0, -1], [-1, 0]])


def test_knn_collinear():
    g = gr.build_knn_graph(np.array([[0.0, 0], [1, 0], [2, 0]]), k=1)
    assert [(i, j) for i, j, _ in g.edges()] == [(0, 1), (1, 2)]
    np.testing.assert_allclose([w for *_, w in g.edges()], np.exp(-1))


def test_knn_two_points():
    g = gr.build_knn_graph(np.array([[0.0, 0], [3, 4]]), k=1)
    assert g.edges() == [(0, 1, pytest.approx(np.exp(-1)))]


def test_knn_ties_broken_by_index():
    # node 1 is equidistant from 0 and 2; the lower index wins
    g = gr.build_knn_graph(np.array([[0.0, 0], [1, 0], [2, 0], [10, 0]]), k=1)
    pairs = {(i, j) for i, j, _ in g.edges()}
    assert (0, 1) in pairs and (2, 3) in pairs


def test_knn_k10_symmetric_union():
    rng = np.random.default_rng(0)
    g = gr.build_knn_graph(rng.uniform(size=(60, 2)), 10)
    W = g.dense()
    assert np.all(W == W.T)
    assert np.all((W > 0).sum(axis=1) >= 10)


def test_diffusion_k2():
    np.testing.assert_allclose(gr.normalized_diffusion(path_graph(2), dense=True), [[0, 1], [1, 0]])


def test_diffusion_p3():
    N = gr.normalized_diffusion(path_graph(3), dense=True)
    assert N[0, 1] == pytest.approx(1 / np.sqrt(2))


def test_diffusion_regular():
    ring = np.zeros((6, 6))
    for i in range(6):
        ring[i, (i + 1) % 6] = ring[(i + 1) % 6, i] = 2.0
    g = gr.from_dense(ring)
    np.testing.assert_allclose(gr.normalized_diffusion(g, dense=True), ring / 4)


def test_normalized_laplacian_small():
    np.testing.assert_allclose(gr.normalized_laplacian(path_graph(2), dense=True), [[1, -1], [-1, 1]])
    np.testing.assert_allclose(np.linalg.eigvalsh(gr.normalized_laplacian(path_graph(3), dense=True)),
                               [0, 1, 2], atol=1e-12)


def test_normalized_laplacian_null_space():
    g = gr.random_geometric_graph(30, seed=1)
    L = gr.normalized_laplacian(g, dense=True)
    np.testing.assert_allclose(L @ np.sqrt(g.degrees), 0, atol=1e-12)


def test_combinatorial_laplacian():
    np.testing.assert_allclose(gr.combinatorial_laplacian(path_graph(2), dense=True), [[1, -1], [-1, 1]])
    g = path_graph(3)
    np.testing.assert_allclose(gr.combinatorial_laplacian(g, dense=True), np.diag([1, 2, 1]) - g.dense())


def test_sparse_output_for_large_graphs():
    g = gr.grid_graph(30, 30)
    assert sp.issparse(gr.laplacian(g, "combinatorial"))


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 80), st.integers(0, 10_000))
def test_laplacian_properties(n, seed):
    g = gr.random_geometric_graph(n, seed=seed)
    L = gr.laplacian(g, "normalized", dense=True)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() >= -1e-9 and ev.max() <= 2 + 1e-9
    Lc = gr.laplacian(g, "combinatorial", dense=True)
    np.testing.assert_allclose(Lc.sum(axis=1), 0, atol=1e-12)


def test_rgg_deterministic():
    assert gr.random_geometric_graph(50, seed=7).content_hash() == \
        gr.random_geometric_graph(50, seed=7).content_hash()


def test_coords_loader(tmp_path):
    p = write(tmp_path, "c.csv", "id,lat,lon\n1,2.0,3.0\n0,0.5,1.5\n")
    np.testing.assert_array_equal(gr.load_coords(p), [[0.5, 1.5], [2.0, 3.0]])
    with pytest.raises(gr.GraphError):
        gr.load_coords(write(tmp_path, "d.csv", "id,lat,lon\n0,1,1\n2,1,1\n"))
