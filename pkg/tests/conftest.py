"""Shared builders for the test suite."""

import numpy as np
import pytest

from graphtrack import (
    FrequencySet,
    Graph,
    build_knn_graph,
    diffusion_model,
    gft_basis,
    laplacian,
)


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1, 1.0) for i in range(n - 1)])


def random_geometric(n: int, k: int, seed: int, weighting: str = "binary") -> Graph:
    """kNN graph on uniform points; retries the seed until connected enough."""
    rng = np.random.default_rng(seed)
    for _ in range(20):
        pts = rng.random((n, 2))
        g = build_knn_graph(pts, k=k, weighting=weighting, sigma=0.5)
        lam = np.linalg.eigvalsh(laplacian(g))
        if lam[1] > 1e-8:
            return g
    raise RuntimeError("could not draw a connected graph")


def small_diffusion(n=6, band=3, w=0.5, sigma_v2=0.1, process_noise=None, seed=0):
    g = random_geometric(n, 2, seed)
    L = laplacian(g)
    return diffusion_model(L, w, FrequencySet.of(range(band)), sigma_v2, process_noise)


@pytest.fixture
def p3_basis():
    return gft_basis(laplacian(path_graph(3)))
