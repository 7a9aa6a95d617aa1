import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtrack import (
    BadK,
    DuplicatePoints,
    FrequencySet,
    Graph,
    GraphTrackError,
    NoReference,
    VertexSet,
    adjacency,
    band_selector,
    build_grid_graph,
    build_knn_graph,
    gft_basis,
    laplacian,
    select_frequencies,
    transform,
    vertex_selector,
)
from conftest import path_graph, random_geometric


# -- graph type ---------------------------------------------------------------

def test_graph_canonicalizes_edges():
    g = Graph.from_edges(3, [(2, 0, 1.5), (0, 1, 2.0)])
    assert g.edges == ((0, 1, 2.0), (0, 2, 1.5))


def test_graph_rejects_self_loops_and_bad_weights():
    with pytest.raises(GraphTrackError):
        Graph.from_edges(3, [(1, 1, 1.0)])
    with pytest.raises(GraphTrackError):
        Graph.from_edges(3, [(0, 1, 0.0)])
    with pytest.raises(GraphTrackError):
        Graph.from_edges(3, [(0, 1, -2.0)])
    with pytest.raises(GraphTrackError):
        Graph.from_edges(2, [(0, 5, 1.0)])
    with pytest.raises(GraphTrackError):
        Graph.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)])


def test_adjacency_laplacian_consistency():
    g = path_graph(4)
    W = adjacency(g)
    L = laplacian(g)
    assert np.allclose(W, W.T)
    assert np.allclose(L, np.diag(W.sum(axis=1)) - W)
    assert np.allclose(L.sum(axis=1), 0.0)


def test_vertex_and_frequency_sets():
    vs = VertexSet.of([3, 1, 1, 2])
    assert vs.indices == (1, 2, 3)
    assert len(VertexSet.of([])) == 0
    fs = FrequencySet.of([2, 0])
    assert fs.indices == (0, 2)
    with pytest.raises(GraphTrackError):
        FrequencySet.of([])
    with pytest.raises(GraphTrackError):
        VertexSet.of([-1])


# -- builders -------------------------------------------------------------

def test_grid_graph_shape():
    g = build_grid_graph(3, 4)
    assert g.n_nodes == 12
    assert len(g.edges) == 3 * 3 + 2 * 4  # horizontal + vertical
    W = adjacency(g)
    # interior node 5 = (1,1) has 4 neighbours
    assert W[5].sum() == 4
    # corner has 2
    assert W[0].sum() == 2
    assert set(np.unique(W)) <= {0.0, 1.0}


def test_grid_graph_row_major_indexing():
    g = build_grid_graph(2, 3)
    W = adjacency(g)
    assert W[0, 1] == 1.0 and W[0, 3] == 1.0 and W[0, 4] == 0.0


def test_knn_graph_symmetric_and_deterministic():
    rng = np.random.default_rng(0)
    pts = rng.random((15, 2))
    a = build_knn_graph(pts, k=3)
    b = build_knn_graph(pts, k=3)
    assert a.edges == b.edges
    W = adjacency(a)
    assert np.allclose(W, W.T)
    # union symmetrization: every node has at least k neighbours
    assert np.all((W > 0).sum(axis=1) >= 3)


def test_knn_gaussian_weights():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    g = build_knn_graph(pts, k=1, weighting="gaussian", sigma=1.0)
    W = adjacency(g)
    assert W[0, 1] == pytest.approx(np.exp(-0.5))


def test_knn_errors():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(DuplicatePoints):
        build_knn_graph(pts, k=1)
    good = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(BadK):
        build_knn_graph(good, k=2)  # k must be < n
    with pytest.raises(BadK):
        build_knn_graph(good, k=0)


# -- basis ---------------------------------------------------------------

def test_basis_orthonormal_ascending():
    g = random_geometric(12, 3, 1)
    basis = gft_basis(laplacian(g))
    U = basis.vectors
    assert np.linalg.norm(U.T @ U - np.eye(12)) <= 1e-10
    assert np.all(np.diff(basis.values) >= -1e-12)


def test_connected_laplacian_has_zero_mode():
    g = random_geometric(10, 3, 2)
    basis = gft_basis(laplacian(g))
    assert abs(basis.values[0]) <= 1e-9
    # constant eigenvector, positive by sign canon
    assert np.allclose(basis.vectors[:, 0], 1.0 / np.sqrt(10))


def test_adjacency_basis_kind():
    g = path_graph(3)
    basis = gft_basis(adjacency(g), "adjacency")
    assert basis.shift_kind == "adjacency"
    with pytest.raises(GraphTrackError):
        gft_basis(laplacian(g), "unknown")


@given(n=st.integers(2, 20), seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_transform_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    g = Graph.from_edges(n, [(i, i + 1, 1.0) for i in range(n - 1)])
    basis = gft_basis(laplacian(g))
    x = rng.standard_normal(n)
    xf = transform(basis, x)
    back = transform(basis, xf, "inverse")
    assert np.linalg.norm(back - x) <= 1e-9 * max(1.0, np.linalg.norm(x))
    # Parseval
    assert np.sum(xf**2) == pytest.approx(np.sum(x**2))


def test_transform_two_node_frozen():
    basis = gft_basis(laplacian(path_graph(2)))
    xf = transform(basis, np.array([1.0, 0.0]))
    assert np.allclose(xf, [0.70710678, 0.70710678], atol=1e-8)
    assert np.allclose(basis.values, [0.0, 2.0])


# -- frequency selection --------------------------------------------------

def test_select_lowest():
    g = path_graph(5)
    basis = gft_basis(laplacian(g))
    fs = select_frequencies(basis, "lowest", k=3)
    assert fs.indices == (0, 1, 2)


def test_select_energy_fraction_single_spike():
    g = path_graph(4)
    basis = gft_basis(laplacian(g))
    # reference living on one frequency picks exactly that index
    x = basis.vectors[:, 2]
    fs = select_frequencies(basis, "energy_fraction", fraction=0.9,
                            reference_signals=x[None, :])
    assert fs.indices == (2,)


def test_select_energy_fraction_requires_reference():
    basis = gft_basis(laplacian(path_graph(3)))
    with pytest.raises(NoReference):
        select_frequencies(basis, "energy_fraction", fraction=0.9)


def test_select_energy_cumulative_property():
    """Chosen band holds at least the asked fraction of reference energy and
    dropping its last pick dips below the target."""
    g = build_grid_graph(5, 15)
    basis = gft_basis(laplacian(g))
    x = np.zeros(75)
    x[[r * 15 for r in range(5)]] = 1.0
    fs = select_frequencies(basis, "energy_fraction", fraction=0.99,
                            reference_signals=x[None, :])
    energy = (basis.vectors.T @ x) ** 2
    total = energy.sum()
    inside = energy[list(fs.indices)].sum()
    assert inside >= 0.99 * total - 1e-12
    ranked = np.lexsort((np.arange(75), -energy))
    chosen = list(ranked[: len(fs)])
    assert sorted(chosen) == list(fs.indices)
    assert energy[chosen[:-1]].sum() < 0.99 * total
    # frozen size for this grid and basis convention
    assert len(fs) == 19


def test_select_errors():
    basis = gft_basis(laplacian(path_graph(3)))
    with pytest.raises(GraphTrackError):
        select_frequencies(basis, "lowest", k=0)
    with pytest.raises(GraphTrackError):
        select_frequencies(basis, "lowest", k=4)
    with pytest.raises(GraphTrackError):
        select_frequencies(basis, "nope", k=1)
    with pytest.raises(GraphTrackError):
        select_frequencies(basis, "energy_fraction", fraction=1.5,
                           reference_signals=np.ones((1, 3)))


# -- selectors -------------------------------------------------------------

def test_band_selector_columns():
    g = path_graph(4)
    basis = gft_basis(laplacian(g))
    U = band_selector(basis, FrequencySet.of([0, 2]))
    assert U.shape == (4, 2)
    assert np.allclose(U, basis.vectors[:, [0, 2]])
    assert np.linalg.norm(U.T @ U - np.eye(2)) <= 1e-10


def test_vertex_selector_diagonal():
    C = vertex_selector(5, VertexSet.of([1, 3]))
    assert C.shape == (5, 5)
    x = np.arange(5.0)
    assert np.allclose(C @ x, [0.0, 1.0, 0.0, 3.0, 0.0])
    assert np.allclose(C @ C, C)  # projector
    empty = vertex_selector(4, VertexSet.of([]))
    assert np.allclose(empty, np.zeros((4, 4)))
