"""Slow, independent reference implementations used only by the tests."""

import heapq
import itertools
import math

import numpy as np


def enumerate_spanning_trees(n, edges):
    """Weighted spanning-tree count by trying every (n-1)-subset of edges."""
    if n == 1:
        return 1.0
    total = 0.0
    for subset in itertools.combinations(range(len(edges)), n - 1):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        ok = True
        w = 1.0
        for k in subset:
            i, j, wk = edges[k]
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
            w *= wk
        if ok:
            total += w
    return total


def _cell_index(v, d, res):
    # a point exactly on a grid line belongs to the cell the ray is heading into;
    # this matters for near-axis rays whose offset underflows to zero
    f = v / res
    i = math.floor(f)
    return i - 1 if f == i and d < 0 else i


def crossing_traversal(origin, angle, length, width, height, res):
    """Cells and chords of a ray from sorted grid-line crossings.

    Every parameter value where the ray meets a vertical or horizontal grid
    line is collected; each gap between consecutive crossings belongs to
    the cell containing its midpoint.
    """
    x0, y0 = origin
    dx, dy = math.cos(angle), math.sin(angle)
    ts = {0.0, float(length)}
    for k in range(width + 1):
        if abs(dx) > 1e-15:
            t = (k * res - x0) / dx
            if 0 < t < length:
                ts.add(t)
    for k in range(height + 1):
        if abs(dy) > 1e-15:
            t = (k * res - y0) / dy
            if 0 < t < length:
                ts.add(t)
    ts = sorted(ts)
    cells, chords = [], []
    for a, b in zip(ts, ts[1:]):
        if b - a < 1e-12:
            continue
        m = 0.5 * (a + b)
        c = _cell_index(x0 + m * dx, dx, res)
        r = _cell_index(y0 + m * dy, dy, res)
        if not (0 <= r < height and 0 <= c < width):
            break
        if cells and cells[-1] == (r, c):
            chords[-1] += b - a
        else:
            cells.append((r, c))
            chords.append(b - a)
    return cells, np.array(chords)


def dijkstra_grid(passable, start, goal):
    """Shortest 8-connected path cost (cells), no corner cutting; inf if none."""
    H, W = passable.shape
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if (r, c) == goal:
            return d
        if d > dist[(r, c)]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if not dr and not dc:
                    continue
                nr, nc = r + dr, c + dc

                def ok(a, b):
                    return 0 <= a < H and 0 <= b < W and (passable[a, b] or (a, b) == start)

                if not ok(nr, nc):
                    continue
                if dr and dc and not (ok(r + dr, c) and ok(r, c + dc)):
                    continue
                nd = d + (math.sqrt(2) if dr and dc else 1.0)
                if nd < dist.get((nr, nc), math.inf):
                    dist[(nr, nc)] = nd
                    heapq.heappush(heap, (nd, (nr, nc)))
    return math.inf


def best_rotation_rmse(P, Q):
    """ATE by dense search over the rotation angle (translation solved in closed form)."""
    P = np.asarray(P, dtype=float)[:, :2]
    Q = np.asarray(Q, dtype=float)[:, :2]
    best = math.inf
    angles = np.linspace(-math.pi, math.pi, 20001)
    for a in angles:
        R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        PR = P @ R.T
        t = (Q - PR).mean(axis=0)
        e = math.sqrt(np.mean(np.sum((PR + t - Q) ** 2, axis=1)))
        best = min(best, e)
    return best


def kron_fim(n, edges):
    """``sum_k (a_k a_k^T) kron Phi_k`` assembled with explicit 3n x 3n selector matrices."""
    F = np.zeros((3 * n, 3 * n))
    for i, j, Phi in edges:
        I_k = np.zeros((3, 3 * n))
        I_k[:, 3 * i:3 * i + 3] = np.eye(3)
        I_k[:, 3 * j:3 * j + 3] = -np.eye(3)
        F += I_k.T @ Phi @ I_k
    return F


def random_spd(rng, scale=1.0):
    A = rng.normal(size=(3, 3))
    return scale * (A @ A.T + 0.5 * np.eye(3))
