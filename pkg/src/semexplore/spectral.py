"""Weighted graph Laplacians, spanning-tree counts and D-optimality.

All determinant-like quantities are carried in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DomainError


@dataclass
class WeightedGraph:
    """Undirected weighted multigraph on nodes ``0..n-1``."""

    n: int
    edges: list = field(default_factory=list)  # (i, j, weight)

    def __post_init__(self):
        for i, j, w in self.edges:
            self._check(i, j, w)

    def _check(self, i, j, w):
        if i == j:
            raise DomainError(f"self-loop on node {i}")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise DomainError(f"edge ({i}, {j}) references a missing node")
        if not w > 0:
            raise DomainError(f"edge weight must be positive, got {w}")

    def add_edge(self, i, j, w):
        self._check(i, j, w)
        self.edges.append((i, j, float(w)))

    def incidence(self) -> np.ndarray:
        """Incidence matrix with one column ``a_k`` per edge (tail +1, head -1)."""
        A = np.zeros((self.n, len(self.edges)))
        for k, (i, j, _) in enumerate(self.edges):
            A[i, k] = 1.0
            A[j, k] = -1.0
        return A

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=float)

    def scaled(self, s) -> "WeightedGraph":
        return WeightedGraph(self.n, [(i, j, w * s) for i, j, w in self.edges])

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        if not self.edges:
            return False
        e = np.array([(i, j) for i, j, _ in self.edges])
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1


def laplacian(graph: WeightedGraph) -> np.ndarray:
    """``L = sum_k w_k a_k a_k^T``; edge orientation does not matter."""
    L = np.zeros((graph.n, graph.n))
    for i, j, w in graph.edges:
        L[i, i] += w
        L[j, j] += w
        L[i, j] -= w
        L[j, i] -= w
    return L


@dataclass(frozen=True)
class SpanningTreeCount:
    log_count: float  # -inf when disconnected
    connected: bool

    @property
    def count(self) -> float:
        return float(np.exp(self.log_count))


DISCONNECTED = SpanningTreeCount(-np.inf, False)


def log_tree_count_cofactor(L: np.ndarray) -> float:
    """log det of the Laplacian with row/column 0 removed (Cholesky)."""
    n = L.shape[0]
    if n == 1:
        return 0.0
    try:
        c, _ = sla.cho_factor(L[1:, 1:], lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return -np.inf
    d = np.diag(c)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return -np.inf
    return float(2.0 * np.sum(np.log(d)))


def log_tree_count_spectral(L: np.ndarray, tol=1e-10) -> float:
    """``sum_{i>=2} log(lambda_i) - log(n)`` over the ascending Laplacian spectrum."""
    n = L.shape[0]
    if n == 1:
        return 0.0
    lam = np.linalg.eigvalsh(L)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if lam[1] <= tol * scale:
        return -np.inf
    return float(np.sum(np.log(lam[1:])) - np.log(n))


def spanning_tree_count(graph: WeightedGraph, method="cofactor") -> SpanningTreeCount:
    """Weighted number of spanning trees (Kirchhoff), in log domain."""
    if graph.n < 1:
        raise DomainError("graph needs at least one node")
    if not graph.is_connected():
        return DISCONNECTED
    L = laplacian(graph)
    if method == "cofactor":
        value = log_tree_count_cofactor(L)
    elif method == "spectral":
        value = log_tree_count_spectral(L)
    else:
        raise DomainError(f"unknown method {method!r}")
    if not np.isfinite(value):
        return DISCONNECTED
    return SpanningTreeCount(value, True)


def d_opt_laplacian(graph: WeightedGraph, method="cofactor") -> float:
    """``(n * S(G)) ** (1/n)``; 0 for a single node or a disconnected graph."""
    n = graph.n
    if n < 2:
        return 0.0
    st = spanning_tree_count(graph, method)
    if not st.connected:
        return 0.0
    return float(np.exp((np.log(n) + st.log_count) / n))


def log_d_opt_laplacian(graph: WeightedGraph) -> float:
    n = graph.n
    if n < 2:
        return -np.inf
    st = spanning_tree_count(graph)
    return (np.log(n) + st.log_count) / n if st.connected else -np.inf


def d_opt_eigen(eigenvalues) -> float:
    """Geometric mean of a positive spectrum."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0 or np.any(lam <= 0):
        raise DomainError("D-optimality needs strictly positive eigenvalues")
    return float(np.exp(np.mean(np.log(lam))))


def algebraic_connectivity(graph: WeightedGraph) -> float:
    if graph.n < 2:
        raise DomainError("algebraic connectivity needs n >= 2")
    if not graph.is_connected():
        return 0.0
    lam = np.linalg.eigvalsh(laplacian(graph))
    return float(max(lam[1], 0.0))
