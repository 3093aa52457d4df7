"""Candidate scoring: hallucinated pose graphs and the Shannon-Renyi utility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .planner import FREE, PlannedPath
from .posegraph import Pose2, PoseGraph
from .semgrid import traverse_ray

EPS_MI = 1e-9
DEFAULT_NODE_SPACING = 0.5
DEFAULT_LOOP_RADIUS = 1.0
DEFAULT_LOOP_BOOST = 2.0
DEFAULT_MIN_SEPARATION = 10


def segment_is_free(labels, resolution, a, b, free_value=FREE) -> bool:
    """True if every cell crossed by the segment ``a -> b`` has ``free_value``."""
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    H, W = labels.shape
    if length == 0:
        r, c = int(a[1] // resolution), int(a[0] // resolution)
        return 0 <= r < H and 0 <= c < W and labels[r, c] == free_value
    trav = traverse_ray(a[:2], math.atan2(b[1] - a[1], b[0] - a[0]), length, W, H, resolution)
    if trav.length < length - 1e-9:
        return False  # left the grid
    return all(labels[r, c] == free_value for r, c in trav.cells)


def hallucinate_graph(graph: PoseGraph, path: PlannedPath, odom_info, loop_radius=DEFAULT_LOOP_RADIUS,
                      loop_info=None, node_spacing=DEFAULT_NODE_SPACING, labels=None,
                      resolution=None, min_separation=DEFAULT_MIN_SEPARATION) -> PoseGraph:
    """Predicted extension of ``graph`` along ``path``; the input is not modified.

    A node is placed every ``node_spacing`` metres and chained to its
    predecessor with ``odom_info``. A predicted node gets a loop edge to the
    nearest existing node at least ``min_separation`` ids older that lies
    within ``loop_radius`` with a free line of sight in ``labels``.
    """
    out = graph.copy()
    if path is None or path.length <= 0 or not graph.nodes:
        return out
    if loop_info is None:
        loop_info = DEFAULT_LOOP_BOOST * np.asarray(odom_info)
    n_real = len(graph.nodes)
    real_xy = graph.positions()
    prev = n_real - 1
    for pose in path.sample(node_spacing):
        p = Pose2.make(*pose)
        q = out.add_node(p)
        out.add_odometry_edge(prev, q, out.nodes[prev].between(p), odom_info)
        prev = q
        eligible = min(n_real, q - min_separation + 1)
        if eligible <= 0:
            continue
        d = np.hypot(real_xy[:eligible, 0] - p.x, real_xy[:eligible, 1] - p.y)
        for j in np.argsort(d, kind="stable"):
            if d[j] > loop_radius:
                break
            if labels is None or segment_is_free(labels, resolution, real_xy[j], p):
                out.add_loop_edge(int(j), q, out.nodes[j].between(p), loop_info)
                break
    return out


def alpha(cost, mi, eps_mi=EPS_MI) -> float:
    return 1.0 + cost / max(mi, eps_mi)


def shannon_renyi_printed(d_opt, mi, cost, eps_mi=EPS_MI) -> float:
    """``D - D / (1 - alpha)`` evaluated literally (undefined for zero cost)."""
    a = alpha(cost, mi, eps_mi)
    return d_opt - (1.0 / (1.0 - a)) * d_opt


def shannon_renyi_utility(d_opt, mi, cost, eps_cost=0.125) -> float:
    """``D * (1 + mi / cost)``, the closed form of the printed expression."""
    return d_opt * (1.0 + mi / max(cost, eps_cost))


@dataclass
class PathCandidate:
    frontier_id: int
    goal: tuple  # goal cell
    path: Optional[PlannedPath]
    mi: float = 0.0
    cost: float = 0.0
    d_opt: float = 0.0
    utility: float = 0.0
    n_loops: int = 0
    hallucinated: Optional[PoseGraph] = field(default=None, repr=False)
    goal_xy: tuple = (0.0, 0.0)  # goal cell centre, metres


def _close(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


def select_action(candidates, rtol=1e-9) -> Optional[PathCandidate]:
    """Highest utility; near-ties (relative ``rtol``) go to lower cost, then lower frontier id.

    Returns ``None`` for an empty list, meaning exploration is complete.
    """
    best = None
    for cand in candidates:
        if best is None:
            best = cand
            continue
        if _close(cand.utility, best.utility, rtol):
            if _close(cand.cost, best.cost, rtol):
                if cand.frontier_id < best.frontier_id:
                    best = cand
            elif cand.cost < best.cost:
                best = cand
        elif cand.utility > best.utility:
            best = cand
    return best
