"""Frontier detection, A* planning on the projected grid, goal blacklist."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.special import softmax

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

DEFAULT_FREE_THRESHOLD = 0.6
DEFAULT_OCC_THRESHOLD = 0.5

_EIGHT = np.ones((3, 3), dtype=bool)
_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
_SQRT2 = math.sqrt(2.0)


def classify_cells(grid, free_threshold=DEFAULT_FREE_THRESHOLD,
                   occ_threshold=DEFAULT_OCC_THRESHOLD) -> np.ndarray:
    p = softmax(grid.logodds, axis=-1)
    labels = np.full(grid.shape, UNKNOWN, dtype=np.int8)
    occ = p[..., 1:].max(axis=-1) > occ_threshold
    labels[occ] = OCCUPIED
    labels[p[..., 0] > free_threshold] = FREE
    return labels


@dataclass
class Frontier:
    cells: list  # (row, col), row-major order
    centroid: tuple  # metres
    index: int = -1

    @property
    def size(self):
        return len(self.cells)

    def bbox(self):
        rc = np.array(self.cells)
        return rc[:, 0].min(), rc[:, 1].min(), rc[:, 0].max(), rc[:, 1].max()


def frontier_mask(labels) -> np.ndarray:
    unknown = labels == UNKNOWN
    near_unknown = ndimage.binary_dilation(unknown, structure=_EIGHT)
    return (labels == FREE) & near_unknown


def detect_frontiers(labels, min_frontier_size=3, resolution=1.0) -> list:
    """Clusters of free cells bordering unknown space, largest first."""
    mask = frontier_mask(labels)
    comp, ncomp = ndimage.label(mask, structure=_EIGHT)
    out = []
    for k in range(1, ncomp + 1):
        rows, cols = np.nonzero(comp == k)  # row-major order
        if len(rows) < min_frontier_size:
            continue
        centroid = ((cols.mean() + 0.5) * resolution, (rows.mean() + 0.5) * resolution)
        out.append(Frontier(list(zip(rows.tolist(), cols.tolist())), centroid))
    out.sort(key=lambda f: (-f.size, f.cells[0]))
    for i, f in enumerate(out):
        f.index = i
    return out


def traversable(labels, clearance=1) -> np.ndarray:
    free = labels == FREE
    if clearance <= 0:
        return free
    occ = labels == OCCUPIED
    size = 2 * clearance + 1
    inflated = ndimage.binary_dilation(occ, structure=np.ones((size, size), dtype=bool))
    return free & ~inflated


def frontier_goal(frontier: Frontier, passable, resolution) -> Optional[tuple]:
    """Passable cell in the frontier's bounding box nearest to its centroid."""
    r0, c0, r1, c1 = frontier.bbox()
    cx = frontier.centroid[0] / resolution - 0.5
    cy = frontier.centroid[1] / resolution - 0.5
    best, best_d = None, math.inf
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if passable[r, c]:
                d = (r - cy) ** 2 + (c - cx) ** 2
                if d < best_d:
                    best, best_d = (r, c), d
    return best


@dataclass
class PlannedPath:
    cells: list
    waypoints: list  # metres
    length: float

    def __len__(self):
        return len(self.waypoints)

    def sample(self, spacing):
        """Poses every ``spacing`` metres of arc length (start excluded).

        The end point is appended when the remainder exceeds a quarter of
        ``spacing``. Headings follow the local path direction.
        """
        if self.length <= 0 or len(self.waypoints) < 2:
            return []
        pts = np.asarray(self.waypoints, dtype=float)
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        stops = list(np.arange(1, int(math.floor(self.length / spacing + 1e-9)) + 1) * spacing)
        if self.length - (stops[-1] if stops else 0.0) > 0.25 * spacing:
            stops.append(self.length)
        out = []
        for s in stops:
            k = min(int(np.searchsorted(cum, s, side="left")) - 1, len(seg_len) - 1)
            k = max(k, 0)
            while seg_len[k] == 0 and k > 0:
                k -= 1
            f = (s - cum[k]) / seg_len[k] if seg_len[k] > 0 else 0.0
            p = pts[k] + min(max(f, 0.0), 1.0) * seg[k]
            out.append((float(p[0]), float(p[1]), math.atan2(seg[k][1], seg[k][0])))
        return out


def _path_from(cells, resolution):
    wps = [((c + 0.5) * resolution, (r + 0.5) * resolution) for r, c in cells]
    length = 0.0
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        length += (_SQRT2 if (r0 != r1 and c0 != c1) else 1.0) * resolution
    return PlannedPath(list(cells), wps, length)


def astar(labels, start, goal, clearance=1, resolution=1.0, passable=None) -> Optional[PlannedPath]:
    """8-connected A* from ``start`` to ``goal`` (cells); ``None`` if unreachable.

    Unknown and inflated cells are blocked; diagonal moves may not cut
    blocked corners. The start cell itself is always allowed.
    Heap ties fall to the smaller heuristic, then row-major order.
    """
    if passable is None:
        passable = traversable(labels, clearance)
    H, W = passable.shape
    start, goal = tuple(start), tuple(goal)
    if start == goal:
        return _path_from([start], resolution)
    if not (0 <= goal[0] < H and 0 <= goal[1] < W) or not passable[goal]:
        return None

    def ok(r, c):
        return 0 <= r < H and 0 <= c < W and (passable[r, c] or (r, c) == start)

    gr, gc = goal
    h0 = math.hypot(start[0] - gr, start[1] - gc)
    g_cost = {start: 0.0}
    parent = {start: None}
    heap = [(h0, h0, start[0], start[1])]
    closed = set()
    while heap:
        f, h, r, c = heapq.heappop(heap)
        node = (r, c)
        if node in closed:
            continue
        if node == goal:
            cells = []
            while node is not None:
                cells.append(node)
                node = parent[node]
            return _path_from(cells[::-1], resolution)
        closed.add(node)
        g = g_cost[node]
        for dr, dc in _MOVES:
            nr, nc = r + dr, c + dc
            if not ok(nr, nc) or (nr, nc) in closed:
                continue
            if dr and dc and not (ok(r + dr, c) and ok(r, c + dc)):
                continue
            ng = g + (_SQRT2 if dr and dc else 1.0)
            if ng < g_cost.get((nr, nc), math.inf) - 1e-12:
                g_cost[(nr, nc)] = ng
                parent[(nr, nc)] = node
                nh = math.hypot(nr - gr, nc - gc)
                heapq.heappush(heap, (ng + nh, nh, nr, nc))
    return None


# ---------------------------------------------------------------------------
# blacklist

UNREACHABLE = "unreachable"
FAILED = "failed"
REACHED = "reached"


@dataclass
class Blacklist:
    merge_radius: float  # metres
    expire_after: Optional[int] = None  # replans; None keeps entries for the whole run
    entries: list = field(default_factory=list)  # (x, y, replan index)

    def contains(self, point, replan=0) -> bool:
        for x, y, t in self.entries:
            if self.expire_after is not None and replan - t >= self.expire_after:
                continue
            if math.hypot(point[0] - x, point[1] - y) <= self.merge_radius + 1e-9:
                return True
        return False

    def __len__(self):
        return len(self.entries)


def blacklist_update(blacklist: Blacklist, goal, outcome, replan=0) -> Blacklist:
    if outcome in (UNREACHABLE, FAILED):
        blacklist.entries.append((float(goal[0]), float(goal[1]), replan))
    return blacklist
