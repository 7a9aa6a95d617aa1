"""Undirected weighted graphs, their spectra, and frequency/vertex selections."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadK,
    DimensionMismatch,
    DuplicatePoints,
    GraphTrackError,
    NoReference,
)
from .numerics import EigenPair, sym_eigendecompose


@dataclass(frozen=True)
class Graph:
    """Simple undirected weighted graph on nodes 0..n_nodes-1.

    Edges are canonical (u < v), unique per pair, with positive weights and
    no self loops.
    """

    n_nodes: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_nodes <= 0:
            raise GraphTrackError("graph needs at least one node")
        seen: set[tuple[int, int]] = set()
        for u, v, w in self.edges:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise GraphTrackError(f"edge ({u},{v}) outside [0,{self.n_nodes})")
            if u == v:
                raise GraphTrackError(f"self loop at node {u}")
            if u > v:
                raise GraphTrackError(f"edge ({u},{v}) not canonical (u < v)")
            if (u, v) in seen:
                raise GraphTrackError(f"duplicate edge ({u},{v})")
            if not (w > 0.0 and np.isfinite(w)):
                raise GraphTrackError(f"edge ({u},{v}) has non-positive weight {w}")
            seen.add((u, v))

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int, float]]) -> "Graph":
        canon = sorted((min(u, v), max(u, v), float(w)) for u, v, w in edges)
        return cls(n_nodes=n_nodes, edges=tuple(canon))


@dataclass(frozen=True)
class VertexSet:
    """Sorted distinct node indices; may be empty."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = self.indices
        if any(int(i) != i or i < 0 for i in idx):
            raise GraphTrackError("vertex indices must be nonnegative integers")
        if list(idx) != sorted(set(idx)):
            raise GraphTrackError("vertex indices must be sorted and distinct")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "VertexSet":
        return cls(tuple(sorted({int(i) for i in indices})))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int)

    def complement(self, n_nodes: int) -> "VertexSet":
        inside = set(self.indices)
        return VertexSet(tuple(i for i in range(n_nodes) if i not in inside))


@dataclass(frozen=True)
class FrequencySet:
    """Sorted distinct spectral indices; never empty."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = self.indices
        if len(idx) == 0:
            raise GraphTrackError("frequency set must be nonempty")
        if any(int(i) != i or i < 0 for i in idx):
            raise GraphTrackError("frequency indices must be nonnegative integers")
        if list(idx) != sorted(set(idx)):
            raise GraphTrackError("frequency indices must be sorted and distinct")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "FrequencySet":
        return cls(tuple(sorted({int(i) for i in indices})))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenbasis of a graph shift operator.

    vectors columns are orthonormal, values ascending, both sign-canonical,
    so two calls on the same shift agree bitwise.
    """

    values: np.ndarray
    vectors: np.ndarray
    shift_kind: str  # "laplacian" | "adjacency"

    @property
    def n_nodes(self) -> int:
        return self.vectors.shape[0]


def adjacency(g: Graph) -> np.ndarray:
    W = np.zeros((g.n_nodes, g.n_nodes))
    for u, v, w in g.edges:
        W[u, v] = W[v, u] = w
    return W


def laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian diag(W 1) - W."""
    W = adjacency(g)
    return np.diag(W.sum(axis=1)) - W


def build_grid_graph(rows: int, cols: int) -> Graph:
    """Binary 4-neighbour grid; node index is row-major r*cols + c."""
    if rows <= 0 or cols <= 0:
        raise GraphTrackError("grid needs positive rows and cols")
    edges = []
    for r in range(rows):
        for c in range(cols):
            n = r * cols + c
            if c + 1 < cols:
                edges.append((n, n + 1, 1.0))
            if r + 1 < rows:
                edges.append((n, n + cols, 1.0))
    return Graph.from_edges(rows * cols, edges)


def build_knn_graph(
    points: np.ndarray,
    k: int,
    weighting: str = "binary",
    sigma: float | None = None,
) -> Graph:
    """k-nearest-neighbour graph, union-symmetrized.

    Edge (i,j) exists when j is among i's k nearest or vice versa. Weights are
    1 or exp(-d^2 / (2 sigma^2)). Exact coordinate ties raise DuplicatePoints;
    distance ties are broken by lower node index (stable argsort).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise DimensionMismatch(f"points must be (n, dim), got {pts.shape}")
    n = pts.shape[0]
    if not (1 <= k < n):
        raise BadK(f"k={k} outside [1, {n - 1}]")
    if weighting not in ("binary", "gaussian"):
        raise GraphTrackError(f"unknown weighting {weighting!r}")
    if weighting == "gaussian" and not (sigma and sigma > 0):
        raise GraphTrackError("gaussian weighting needs sigma > 0")

    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0.0):
        i, j = np.argwhere((dist == 0.0) & off)[0]
        raise DuplicatePoints(f"points {i} and {j} coincide")

    pairs: set[tuple[int, int]] = set()
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        neighbours = [j for j in order if j != i][:k]
        for j in neighbours:
            pairs.add((min(i, j), max(i, j)))

    edges = []
    for u, v in sorted(pairs):
        if weighting == "binary":
            w = 1.0
        else:
            w = float(np.exp(-dist[u, v] ** 2 / (2.0 * sigma**2)))
        edges.append((u, v, w))
    return Graph.from_edges(n, edges)


def gft_basis(shift: np.ndarray, shift_kind: str = "laplacian") -> SpectralBasis:
    """Graph Fourier basis: eigendecomposition of the (symmetric) shift."""
    if shift_kind not in ("laplacian", "adjacency"):
        raise GraphTrackError(f"unknown shift kind {shift_kind!r}")
    pair: EigenPair = sym_eigendecompose(shift)
    return SpectralBasis(values=pair.values, vectors=pair.vectors, shift_kind=shift_kind)


def transform(basis: SpectralBasis, signal: np.ndarray, direction: str = "forward") -> np.ndarray:
    """Forward U^T x (vertex to spectral) or inverse U xhat."""
    x = np.asarray(signal, dtype=float)
    n = basis.n_nodes
    if x.shape[-1 if x.ndim > 1 else 0] != n and x.shape[0] != n:
        raise DimensionMismatch(f"signal length {x.shape} vs {n} nodes")
    if direction == "forward":
        return basis.vectors.T @ x
    if direction == "inverse":
        return basis.vectors @ x
    raise GraphTrackError(f"unknown direction {direction!r}")


def select_frequencies(
    basis: SpectralBasis,
    policy: str,
    k: int | None = None,
    fraction: float | None = None,
    reference_signals: np.ndarray | None = None,
) -> FrequencySet:
    """Pick the active band.

    policy "lowest": indices 0..k-1.
    policy "energy_fraction": smallest set of spectral indices whose summed
    energy over the reference signals reaches fraction of the total; ranked
    by energy descending, ties broken by lower index.
    """
    n = basis.n_nodes
    if policy == "lowest":
        if k is None or not (1 <= k <= n):
            raise GraphTrackError(f"lowest policy needs 1 <= k <= {n}")
        return FrequencySet(tuple(range(int(k))))
    if policy != "energy_fraction":
        raise GraphTrackError(f"unknown policy {policy!r}")
    if fraction is None or not (0.0 < fraction <= 1.0):
        raise GraphTrackError("energy_fraction policy needs fraction in (0, 1]")
    if reference_signals is None:
        raise NoReference("energy_fraction policy needs reference signals")
    sig = np.atleast_2d(np.asarray(reference_signals, dtype=float))
    if sig.shape[1] != n:
        raise DimensionMismatch(f"reference signals have {sig.shape[1]} columns, graph has {n} nodes")
    coeffs = sig @ basis.vectors  # rows are per-signal spectra
    energy = (coeffs**2).sum(axis=0)
    total = float(energy.sum())
    if total <= 0.0:
        raise NoReference("reference signals have zero energy")
    order = np.lexsort((np.arange(n), -energy))
    cum = np.cumsum(energy[order])
    count = int(np.searchsorted(cum, fraction * total - 1e-15) + 1)
    count = min(count, n)
    return FrequencySet.of(order[:count])


def band_selector(basis: SpectralBasis, freqs: FrequencySet) -> np.ndarray:
    """Columns of the Fourier basis spanning the band (n_nodes x |F|)."""
    idx = freqs.as_array()
    if idx[-1] >= basis.n_nodes:
        raise DimensionMismatch(f"frequency {idx[-1]} outside basis of size {basis.n_nodes}")
    return basis.vectors[:, idx]


def vertex_selector(n_nodes: int, nodes: VertexSet) -> np.ndarray:
    """Diagonal 0/1 selection matrix for the given nodes."""
    arr = nodes.as_array()
    if arr.size and arr[-1] >= n_nodes:
        raise DimensionMismatch(f"node {arr[-1]} outside [0,{n_nodes})")
    c = np.zeros(n_nodes)
    c[arr] = 1.0
    return np.diag(c)
