"""Undirected graphs, the normalized Laplacian and the renormalized propagation matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from .linalg import SparseMatrix, eigh_sym

__all__ = ["Graph", "LaplacianBundle", "build_laplacian", "connected_components", "canonical_edges"]


def canonical_edges(edges, n: int) -> np.ndarray:
    """Sorted ``(m, 2)`` array of unique pairs ``i < j``; self-loops are dropped."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ValueError(f"edge endpoint outside [0, {n})")
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    if not len(e):
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(e, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with node features and integer class labels.

    ``edges`` is normalised on construction (duplicates collapsed, self-loops
    removed, each pair stored once as ``i < j``).  ``node_ids`` and
    ``class_names`` keep the original identifiers from the source files.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    node_ids: tuple = ()
    class_names: tuple = ()
    dropped_edges: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "edges", canonical_edges(self.edges, self.n))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.n:
            raise ValueError(f"feature matrix must have {self.n} rows, got shape {feats.shape}")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.n,):
            raise ValueError("need exactly one label per node")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(str(i) for i in range(self.n)))
        if not self.class_names:
            k = int(labels.max()) + 1 if self.n else 0
            object.__setattr__(self, "class_names", tuple(str(c) for c in range(k)))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def adjacency(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        a = sp.coo_matrix(
            (np.ones(2 * self.m), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        )
        return a.tocsr()

    def permuted(self, perm) -> "Graph":
        """Relabel nodes so that old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return Graph(
            self.n,
            inv[self.edges],
            self.features[perm],
            self.labels[perm],
            tuple(self.node_ids[p] for p in perm),
            self.class_names,
        )


@dataclass(frozen=True, eq=False)
class LaplacianBundle:
    """Operators derived from one graph.

    The Laplacian is kept sparse so that large graphs fit in memory; the
    eigendecomposition is computed on first access of :attr:`spectrum` and
    then reused by every wavelet scale.
    """

    laplacian: SparseMatrix  # I - D^{-1/2} A D^{-1/2}
    propagation: SparseMatrix  # D~^{-1/2} (A + I) D~^{-1/2}
    degree: np.ndarray

    @property
    def n(self) -> int:
        return self.laplacian.rows

    def laplacian_dense(self) -> np.ndarray:
        return self.laplacian.to_dense()

    def renormalized_laplacian(self) -> np.ndarray:
        return np.eye(self.n) - self.propagation.to_dense()

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """``(eigenvalues, eigenvectors)`` of the Laplacian, ascending."""
        return eigh_sym(self.laplacian_dense())


def _sym_normalize(a: sp.csr_matrix, deg: np.ndarray) -> sp.csr_matrix:
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    coo = a.tocoo()
    # dinv[i] * dinv[j] is commutative, so the result is exactly symmetric
    vals = coo.data * (dinv[coo.row] * dinv[coo.col])
    return sp.csr_matrix((vals, (coo.row, coo.col)), shape=a.shape)


def build_laplacian(g: Graph) -> LaplacianBundle:
    """Normalized Laplacian plus the self-loop renormalized propagation matrix.

    Isolated nodes get an all-zero Laplacian row, so eigenvalue 0 has one
    eigenvector per connected component.
    """
    a = g.adjacency()
    deg = np.asarray(a.sum(axis=1)).ravel()
    ones = sp.diags((deg > 0).astype(np.float64), format="csr")
    lap = (ones - _sym_normalize(a, deg)).tocsr()
    lap.eliminate_zeros()
    a_tilde = (a + sp.identity(g.n, format="csr")).tocsr()
    prop = _sym_normalize(a_tilde, deg + 1.0)
    return LaplacianBundle(SparseMatrix.from_scipy(lap), SparseMatrix.from_scipy(prop), deg)


def connected_components(g: Graph) -> list[np.ndarray]:
    """Node index arrays, one per component, largest first (ties by smallest member)."""
    if g.n == 0:
        return []
    k, lab = _cc(g.adjacency(), directed=False)
    comps = [np.flatnonzero(lab == c) for c in range(k)]
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps
