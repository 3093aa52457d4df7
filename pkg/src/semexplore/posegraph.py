"""SE(2) pose graphs: construction, Gauss-Newton optimization, Fisher information.

Edge errors follow the usual relative-pose convention
``e_ij = t2v(Z_ij^-1 (X_i^-1 X_j))`` and the cost is
``0.5 * sum e^T Omega e``. Node 0 anchors the gauge.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .errors import DomainError, OptimizationError
from .spectral import WeightedGraph, d_opt_laplacian


def normalize_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


def _wrap(a):
    return -np.remainder(-a + np.pi, 2 * np.pi) + np.pi


class Pose2(NamedTuple):
    x: float
    y: float
    theta: float

    @classmethod
    def make(cls, x, y, theta):
        return cls(float(x), float(y), normalize_angle(float(theta)))

    def compose(self, other) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        ox, oy, ot = other
        return Pose2.make(self.x + c * ox - s * oy, self.y + s * ox + c * oy, self.theta + ot)

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2.make(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def between(self, other) -> "Pose2":
        """Relative transform ``self^-1 * other``."""
        return self.inverse().compose(other)

    def distance(self, other) -> float:
        return math.hypot(self.x - other[0], self.y - other[1])


IDENTITY = Pose2(0.0, 0.0, 0.0)

ODOMETRY = "odometry"
LOOP = "loop"


def _check_information(info):
    info = np.asarray(info, dtype=float)
    if info.shape != (3, 3):
        raise DomainError(f"information matrix must be 3x3, got {info.shape}")
    scale = max(1.0, float(np.max(np.abs(info))))
    if np.max(np.abs(info - info.T)) > 1e-12 * scale:
        raise DomainError("information matrix is not symmetric")
    info = 0.5 * (info + info.T)
    if np.min(np.linalg.eigvalsh(info)) <= 0:
        raise DomainError("information matrix is not positive definite")
    return info


@dataclass
class GraphEdge:
    i: int
    j: int
    measurement: Pose2
    information: np.ndarray
    kind: str = ODOMETRY


@dataclass
class PoseGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    fixed: int = 0

    def __len__(self):
        return len(self.nodes)

    def copy(self) -> "PoseGraph":
        return PoseGraph(list(self.nodes), list(self.edges), self.fixed)

    def add_node(self, pose) -> int:
        self.nodes.append(Pose2.make(*pose))
        return len(self.nodes) - 1

    def _add_edge(self, i, j, measurement, information, kind):
        n = len(self.nodes)
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise DomainError(f"edge ({i}, {j}) must join two distinct existing nodes")
        edge = GraphEdge(i, j, Pose2.make(*measurement), _check_information(information), kind)
        self.edges.append(edge)
        return edge

    def add_odometry_edge(self, i, j, measurement, information):
        return self._add_edge(i, j, measurement, information, ODOMETRY)

    def add_loop_edge(self, i, j, measurement, information):
        return self._add_edge(i, j, measurement, information, LOOP)

    @property
    def loop_edges(self):
        return [e for e in self.edges if e.kind == LOOP]

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.nodes]).reshape(-1, 2)

    def as_array(self) -> np.ndarray:
        return np.array(self.nodes, dtype=float).reshape(-1, 3)

    def components(self) -> int:
        n = len(self.nodes)
        if n == 0:
            return 0
        if not self.edges:
            return n
        e = np.array([(ed.i, ed.j) for ed in self.edges])
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return connected_components(adj, directed=False)[0]


# ---------------------------------------------------------------------------
# least squares


def _edge_arrays(graph):
    idx_i = np.array([e.i for e in graph.edges], dtype=np.int64)
    idx_j = np.array([e.j for e in graph.edges], dtype=np.int64)
    Z = np.array([e.measurement for e in graph.edges], dtype=float).reshape(-1, 3)
    Om = np.array([e.information for e in graph.edges], dtype=float).reshape(-1, 3, 3)
    return idx_i, idx_j, Z, Om


def _residuals(X, idx_i, idx_j, Z, jacobians=False):
    xi, xj = X[idx_i], X[idx_j]
    ci, si = np.cos(xi[:, 2]), np.sin(xi[:, 2])
    cz, sz = np.cos(Z[:, 2]), np.sin(Z[:, 2])
    dx = xj[:, 0] - xi[:, 0]
    dy = xj[:, 1] - xi[:, 1]
    # R_i^T (t_j - t_i)
    lx = ci * dx + si * dy
    ly = -si * dx + ci * dy
    ux, uy = lx - Z[:, 0], ly - Z[:, 1]
    e = np.empty((len(Z), 3))
    e[:, 0] = cz * ux + sz * uy
    e[:, 1] = -sz * ux + cz * uy
    e[:, 2] = _wrap(xj[:, 2] - xi[:, 2] - Z[:, 2])
    if not jacobians:
        return e
    m = len(Z)
    RzT = np.empty((m, 2, 2))
    RzT[:, 0, 0], RzT[:, 0, 1], RzT[:, 1, 0], RzT[:, 1, 1] = cz, sz, -sz, cz
    RiT = np.empty((m, 2, 2))
    RiT[:, 0, 0], RiT[:, 0, 1], RiT[:, 1, 0], RiT[:, 1, 1] = ci, si, -si, ci
    dRiT = np.empty((m, 2, 2))
    dRiT[:, 0, 0], dRiT[:, 0, 1], dRiT[:, 1, 0], dRiT[:, 1, 1] = -si, ci, -ci, -si
    RR = RzT @ RiT
    A = np.zeros((m, 3, 3))
    B = np.zeros((m, 3, 3))
    A[:, :2, :2] = -RR
    A[:, :2, 2] = np.einsum("mab,mb->ma", RzT @ dRiT, np.stack([dx, dy], axis=1))
    A[:, 2, 2] = -1.0
    B[:, :2, :2] = RR
    B[:, 2, 2] = 1.0
    return e, A, B


def graph_cost(graph: PoseGraph, X=None) -> float:
    if not graph.edges:
        return 0.0
    if X is None:
        X = graph.as_array()
    idx_i, idx_j, Z, Om = _edge_arrays(graph)
    e = _residuals(X, idx_i, idx_j, Z)
    return float(0.5 * np.einsum("ma,mab,mb->", e, Om, e))


def _normal_equations(X, idx_i, idx_j, Z, Om, n):
    e, A, B = _residuals(X, idx_i, idx_j, Z, jacobians=True)
    OA, OB = Om @ A, Om @ B
    blocks = {
        "ii": np.transpose(A, (0, 2, 1)) @ OA,
        "ij": np.transpose(A, (0, 2, 1)) @ OB,
        "jj": np.transpose(B, (0, 2, 1)) @ OB,
    }
    Oe = np.einsum("mab,mb->ma", Om, e)
    bi = np.einsum("mba,mb->ma", A, Oe)
    bj = np.einsum("mba,mb->ma", B, Oe)
    r3 = np.arange(3)
    rr, cc = np.meshgrid(r3, r3, indexing="ij")
    rows, cols, vals = [], [], []
    for key, (p, q) in (("ii", (idx_i, idx_i)), ("ij", (idx_i, idx_j)), ("jj", (idx_j, idx_j))):
        blk = blocks[key]
        rows.append((3 * p[:, None, None] + rr).ravel())
        cols.append((3 * q[:, None, None] + cc).ravel())
        vals.append(blk.ravel())
        if key == "ij":
            rows.append((3 * q[:, None, None] + rr).ravel())
            cols.append((3 * p[:, None, None] + cc).ravel())
            vals.append(np.transpose(blk, (0, 2, 1)).ravel())
    H = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(3 * n, 3 * n)).tocsc()
    b = np.zeros(3 * n)
    np.add.at(b, (3 * idx_i[:, None] + r3).ravel(), bi.ravel())
    np.add.at(b, (3 * idx_j[:, None] + r3).ravel(), bj.ravel())
    return H, b


@dataclass
class OptimizationResult:
    graph: PoseGraph
    cost: float
    initial_cost: float
    iterations: int
    cost_history: list


def optimize(graph: PoseGraph, max_iters=20, tol=1e-9, max_halvings=12) -> OptimizationResult:
    """Gauss-Newton with step halving; returns an optimized copy of ``graph``."""
    n = len(graph.nodes)
    X = graph.as_array().copy()
    out = graph.copy()
    if n < 2 or not graph.edges:
        c = graph_cost(graph)
        return OptimizationResult(out, c, c, 0, [c])
    idx_i, idx_j, Z, Om = _edge_arrays(graph)
    keep = np.ones(3 * n, dtype=bool)
    keep[3 * graph.fixed: 3 * graph.fixed + 3] = False

    def cost_of(Xc):
        e = _residuals(Xc, idx_i, idx_j, Z)
        return float(0.5 * np.einsum("ma,mab,mb->", e, Om, e))

    cost = cost_of(X)
    history = [cost]
    initial = cost
    it = 0
    for it in range(1, max_iters + 1):
        H, b = _normal_equations(X, idx_i, idx_j, Z, Om, n)
        Hr = H[keep][:, keep]
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                dx = spsolve(Hr, -b[keep])
            except RuntimeError as exc:  # singular factorization
                dx = None
        if dx is None or not np.all(np.isfinite(dx)):
            raise OptimizationError(
                f"singular normal equations: {n} nodes, {len(graph.edges)} edges, "
                f"{graph.components()} connected component(s); is the graph connected?")
        step = np.zeros(3 * n)
        step[keep] = dx
        step = step.reshape(n, 3)
        scale = 1.0
        accepted = False
        for _ in range(max_halvings):
            Xn = X + scale * step
            Xn[:, 2] = _wrap(Xn[:, 2])
            c = cost_of(Xn)
            if c <= cost:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        X, cost = Xn, c
        history.append(cost)
        if np.linalg.norm(scale * step) < tol:
            break
    out.nodes = [Pose2.make(*row) for row in X]
    return OptimizationResult(out, cost, initial, it, history)


# ---------------------------------------------------------------------------
# Fisher information and its Laplacian surrogate


def adjoint(T) -> np.ndarray:
    """SE(2) adjoint ``[[R, J t], [0, 1]]`` with ``J = [[0, 1], [-1, 0]]``."""
    x, y, th = T
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, y], [s, c, -x], [0.0, 0.0, 1.0]])


def edge_fim(edge: GraphEdge) -> np.ndarray:
    Ad = adjoint(edge.measurement)
    F = Ad.T @ edge.information @ Ad
    return 0.5 * (F + F.T)


_NORMS = {"1": 1, 1: 1, "2": 2, 2: 2, "inf": np.inf, np.inf: np.inf,
          "fro": "fro", "frobenius": "fro"}


def matrix_norm(M, p) -> float:
    try:
        order = _NORMS[p]
    except (KeyError, TypeError):
        raise DomainError(f"unsupported norm {p!r}; use 1, 2, inf or frobenius") from None
    return float(np.linalg.norm(M, order))


def edge_weight(edge: GraphEdge, p=2, loop_boost=2.0) -> float:
    w = matrix_norm(edge_fim(edge), p)
    return w * loop_boost if edge.kind == LOOP else w


def to_weighted_graph(graph: PoseGraph, p=2, loop_boost=2.0) -> WeightedGraph:
    return WeightedGraph(len(graph.nodes),
                         [(e.i, e.j, edge_weight(e, p, loop_boost)) for e in graph.edges])


def graph_d_opt(graph: PoseGraph, p=2, loop_boost=2.0) -> float:
    return d_opt_laplacian(to_weighted_graph(graph, p, loop_boost))


def full_fim(graph: PoseGraph, max_nodes=200) -> np.ndarray:
    """Dense ``sum_k (a_k a_k^T) kron Phi_k`` with ``Phi_k`` the edge FIM."""
    n = len(graph.nodes)
    if n > max_nodes:
        raise DomainError(f"full FIM limited to {max_nodes} nodes")
    F = np.zeros((3 * n, 3 * n))
    for e in graph.edges:
        a = np.zeros(n)
        a[e.i], a[e.j] = 1.0, -1.0
        F += np.kron(np.outer(a, a), edge_fim(e))
    return F


# ---------------------------------------------------------------------------
# plain-text exchange format


def write_g2o(graph: PoseGraph, path):
    with open(path, "w") as f:
        for k, p in enumerate(graph.nodes):
            f.write(f"VERTEX_SE2 {k} {p.x:.17g} {p.y:.17g} {p.theta:.17g}\n")
        for e in graph.edges:
            I = e.information
            m = e.measurement
            vals = [I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2]]
            info = " ".join(f"{v:.17g}" for v in vals)
            f.write(f"EDGE_SE2 {e.i} {e.j} {m.x:.17g} {m.y:.17g} {m.theta:.17g} {info}\n")


def read_g2o(path) -> PoseGraph:
    """Read a graph written by :func:`write_g2o`.

    Edges joining consecutive node ids come back as odometry, all others as
    loop closures.
    """
    g = PoseGraph()
    vertices = {}
    edges = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "VERTEX_SE2":
                vertices[int(tok[1])] = tuple(map(float, tok[2:5]))
            elif tok[0] == "EDGE_SE2":
                i, j = int(tok[1]), int(tok[2])
                m = tuple(map(float, tok[3:6]))
                a, b, c, d, e_, f_ = map(float, tok[6:12])
                info = np.array([[a, b, c], [b, d, e_], [c, e_, f_]])
                edges.append((i, j, m, info))
            else:
                raise DomainError(f"{path}:{lineno}: unknown record {tok[0]!r}")
    for k in sorted(vertices):
        g.add_node(vertices[k])
    for i, j, m, info in edges:
        kind = ODOMETRY if j == i + 1 else LOOP
        g._add_edge(i, j, m, info, kind)
    return g
