"""Multi-class occupancy grid stored as per-cell log-odds vectors.

Every cell holds C+1 log-odds values measured against the free class, so
component 0 is identically zero. Cells are addressed as ``(row, col)``; cell
``(r, c)`` covers ``[c*res, (c+1)*res) x [r*res, (r+1)*res)`` in the map
frame.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import entr, softmax

from .errors import ConfigurationError, DomainError

LOGODDS_CLAMP = 50.0
DEFAULT_RESOLUTION = 0.25
DEFAULT_HIT_INCREMENT = 1.386
DEFAULT_MISS_DECREMENT = 0.847

_TIE_RTOL = 1e-12
_MIN_CHORD = 1e-12  # relative to the resolution; shorter round-off slivers are merged


@dataclass
class SemanticGrid:
    width: int
    height: int
    resolution: float
    num_classes: int
    logodds: np.ndarray  # (height, width, C+1)
    prior_logodds: np.ndarray  # (C+1,)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def extent(self):
        return (self.width * self.resolution, self.height * self.resolution)

    def copy(self) -> "SemanticGrid":
        return SemanticGrid(self.width, self.height, self.resolution, self.num_classes,
                            self.logodds.copy(), self.prior_logodds.copy())

    def probabilities(self) -> np.ndarray:
        """Class probabilities of every cell, shape ``(H, W, C+1)``."""
        return softmax(self.logodds, axis=-1)

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def cell_of(self, x: float, y: float):
        return (int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution)))

    def cell_center(self, cell):
        r, c = cell
        return ((c + 0.5) * self.resolution, (r + 0.5) * self.resolution)

    def observed_mask(self) -> np.ndarray:
        """Cells whose log-odds moved away from the prior."""
        return np.any(self.logodds != self.prior_logodds, axis=-1)

    def argmax_labels(self) -> np.ndarray:
        return np.argmax(self.logodds, axis=-1)


def new_grid(width, height, resolution=DEFAULT_RESOLUTION, num_classes=1, prior=None) -> SemanticGrid:
    if resolution <= 0:
        raise ConfigurationError(f"resolution must be positive, got {resolution}")
    if width < 1 or height < 1:
        raise ConfigurationError(f"grid must be at least 1x1, got {width}x{height}")
    if num_classes < 1:
        raise ConfigurationError(f"need at least one semantic class, got {num_classes}")
    if prior is None:
        prior = np.full(num_classes + 1, 1.0 / (num_classes + 1))
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (num_classes + 1,):
        raise ConfigurationError(f"prior needs {num_classes + 1} components, got {prior.shape}")
    if np.any(prior <= 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ConfigurationError("prior must be strictly positive and sum to 1")
    y0 = np.log(prior / prior[0])
    y0[0] = 0.0
    logodds = np.broadcast_to(y0, (height, width, num_classes + 1)).copy()
    return SemanticGrid(int(width), int(height), float(resolution), int(num_classes), logodds, y0)


def _check_cell(grid, cell):
    if not grid.in_bounds(cell):
        raise IndexError(f"cell {cell} outside {grid.height}x{grid.width} grid")


def class_probability(grid: SemanticGrid, cell, c: int) -> float:
    _check_cell(grid, cell)
    if not 0 <= c <= grid.num_classes:
        raise IndexError(f"class {c} outside [0, {grid.num_classes}]")
    return float(softmax(grid.logodds[cell[0], cell[1]])[c])


def update_cell(grid: SemanticGrid, cell, beta) -> SemanticGrid:
    """Add one observation's increment ``beta - y0`` to a cell (in place)."""
    _check_cell(grid, cell)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != grid.prior_logodds.shape or beta[0] != 0.0:
        raise DomainError("beta must have C+1 components with component 0 equal to 0")
    r, c = cell
    y = grid.logodds[r, c] + (beta - grid.prior_logodds)
    grid.logodds[r, c] = np.clip(y, -LOGODDS_CLAMP, LOGODDS_CLAMP)
    return grid


# ---------------------------------------------------------------------------
# ray traversal


@dataclass
class RayTraversal:
    cells: list
    entry: np.ndarray
    exit: np.ndarray
    hit: Optional[tuple] = None

    @property
    def chords(self) -> np.ndarray:
        return self.exit - self.entry

    @property
    def length(self) -> float:
        return float(self.exit[-1]) if len(self.cells) else 0.0

    def __len__(self):
        return len(self.cells)


def _start_index(coord, step_dir, resolution):
    s = coord / resolution
    i = math.floor(s)
    if step_dir < 0 and s == i:
        i -= 1
    return i


def _boundary_t(coord, idx, direction, resolution):
    if direction > 0:
        return ((idx + 1) * resolution - coord) / direction
    if direction < 0:
        return (idx * resolution - coord) / direction
    return math.inf


def traverse_ray(origin, angle, max_range, width, height, resolution) -> RayTraversal:
    """Exact grid traversal of a ray segment (Amanatides-Woo).

    Returns the visited cells in order with entry/exit distances along the
    ray; cells touched only at a corner (zero chord) are skipped.
    """
    x0, y0 = float(origin[0]), float(origin[1])
    if not (0.0 <= x0 <= width * resolution and 0.0 <= y0 <= height * resolution):
        raise DomainError(f"ray origin {origin} outside the grid")
    cells, entry, exit_ = [], [], []
    if max_range <= 0:
        return RayTraversal(cells, np.zeros(0), np.zeros(0))
    dx, dy = math.cos(angle), math.sin(angle)
    col = _start_index(x0, dx, resolution)
    row = _start_index(y0, dy, resolution)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    t = 0.0
    while 0 <= col < width and 0 <= row < height:
        tx = _boundary_t(x0, col, dx, resolution)
        ty = _boundary_t(y0, row, dy, resolution)
        t_next = min(tx, ty, max_range)
        if t_next > t + _MIN_CHORD * resolution:
            cells.append((row, col))
            entry.append(t)
            exit_.append(t_next)
            t = t_next
        if t_next >= max_range:
            break
        if math.isclose(tx, ty, rel_tol=_TIE_RTOL, abs_tol=1e-15):
            col += sx
            row += sy
        elif tx < ty:
            col += sx
        else:
            row += sy
    return RayTraversal(cells, np.array(entry), np.array(exit_))


@dataclass
class BatchTraversal:
    """Padded traversal of many rays; entry ``[k, s]`` is step ``s`` of ray ``k``."""

    rows: np.ndarray
    cols: np.ndarray
    entry: np.ndarray
    exit: np.ndarray
    valid: np.ndarray
    count: np.ndarray  # number of valid steps per ray

    @property
    def chords(self):
        return np.where(self.valid, self.exit - self.entry, 0.0)


def traverse_rays(origins, angles, max_ranges, width, height, resolution) -> BatchTraversal:
    """Vectorized :func:`traverse_ray` over N rays, stepping all rays in lockstep."""
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    angles = np.asarray(angles, dtype=float).reshape(-1)
    n = angles.shape[0]
    max_ranges = np.broadcast_to(np.asarray(max_ranges, dtype=float), (n,)).copy()
    if origins.shape[0] == 1 and n > 1:
        origins = np.repeat(origins, n, axis=0)
    x0, y0 = origins[:, 0], origins[:, 1]
    if np.any((x0 < 0) | (x0 > width * resolution) | (y0 < 0) | (y0 > height * resolution)):
        raise DomainError("ray origin outside the grid")
    dx, dy = np.cos(angles), np.sin(angles)
    sx = np.where(dx > 0, 1, -1)
    sy = np.where(dy > 0, 1, -1)
    fx, fy = x0 / resolution, y0 / resolution
    col = np.floor(fx).astype(np.int64)
    row = np.floor(fy).astype(np.int64)
    col = np.where((dx < 0) & (fx == col), col - 1, col)
    row = np.where((dy < 0) & (fy == row), row - 1, row)
    t = np.zeros(n)
    active = max_ranges > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_dx = np.where(dx != 0, 1.0 / np.where(dx != 0, dx, 1.0), np.inf)
        inv_dy = np.where(dy != 0, 1.0 / np.where(dy != 0, dy, 1.0), np.inf)
    out_r, out_c, out_in, out_out, out_v = [], [], [], [], []
    while True:
        active &= (col >= 0) & (col < width) & (row >= 0) & (row < height)
        if not active.any():
            break
        bx = np.where(dx > 0, (col + 1) * resolution, col * resolution)
        by = np.where(dy > 0, (row + 1) * resolution, row * resolution)
        with np.errstate(invalid="ignore"):
            tx = np.where(dx != 0, (bx - x0) * inv_dx, np.inf)
            ty = np.where(dy != 0, (by - y0) * inv_dy, np.inf)
        t_next = np.minimum(np.minimum(tx, ty), max_ranges)
        emit = active & (t_next > t + _MIN_CHORD * resolution)
        out_r.append(row.copy())
        out_c.append(col.copy())
        out_in.append(t.copy())
        out_out.append(np.where(emit, t_next, t))
        out_v.append(emit)
        t = np.where(emit, t_next, t)
        done = t_next >= max_ranges
        tie = np.isclose(tx, ty, rtol=_TIE_RTOL, atol=1e-15)
        step_x = active & ~done & (tie | (tx < ty))
        step_y = active & ~done & (tie | (tx > ty))
        col = np.where(step_x, col + sx, col)
        row = np.where(step_y, row + sy, row)
        active &= ~done
    if not out_v:
        z = np.zeros((n, 0))
        return BatchTraversal(z.astype(np.int64), z.astype(np.int64), z, z, z.astype(bool),
                              np.zeros(n, dtype=np.int64))
    valid = np.stack(out_v, axis=1)
    # compact so the valid steps of every ray are left-aligned
    order = np.argsort(~valid, axis=1, kind="stable")
    take = lambda a: np.take_along_axis(np.stack(a, axis=1), order, axis=1)
    valid = np.take_along_axis(valid, order, axis=1)
    count = valid.sum(axis=1)
    k = int(count.max()) if n else 0
    return BatchTraversal(take(out_r)[:, :k], take(out_c)[:, :k], take(out_in)[:, :k],
                          take(out_out)[:, :k], valid[:, :k], count)


# ---------------------------------------------------------------------------
# inverse observation model and scan integration


def free_beta(num_classes, miss_decrement=DEFAULT_MISS_DECREMENT):
    b = np.full(num_classes + 1, -float(miss_decrement))
    b[0] = 0.0
    return b


def hit_beta(num_classes, c, hit_increment=DEFAULT_HIT_INCREMENT):
    b = np.zeros(num_classes + 1)
    b[c] = float(hit_increment)
    return b


@dataclass
class InverseObservation:
    cells: list
    betas: np.ndarray  # (len(cells), C+1)


def inverse_observation(traversal: RayTraversal, observed_class, num_classes,
                        hit_increment=DEFAULT_HIT_INCREMENT,
                        miss_decrement=DEFAULT_MISS_DECREMENT) -> InverseObservation:
    """Per-cell log-odds vectors induced by one beam.

    Cells in front of the hit favour free space and the hit cell favours the
    observed class. A traversal without ``hit`` (max-range miss) marks every
    traversed cell free.
    """
    n = len(traversal)
    betas = np.tile(free_beta(num_classes, miss_decrement), (n, 1))
    if traversal.hit is not None and n:
        if not 1 <= observed_class <= num_classes:
            raise DomainError(f"observed class {observed_class} outside [1, {num_classes}]")
        betas[-1] = hit_beta(num_classes, observed_class, hit_increment)
    return InverseObservation(list(traversal.cells), betas)


@dataclass
class Scan:
    """One sensor sweep. ``labels[k] == 0`` marks a max-range miss for beam k."""

    angles: np.ndarray  # relative to the robot heading
    ranges: np.ndarray
    labels: np.ndarray
    max_range: float

    def __len__(self):
        return len(self.angles)

    def permuted(self, order):
        order = np.asarray(order)
        return Scan(self.angles[order], self.ranges[order], self.labels[order], self.max_range)


def _scan_rays(grid, poses, scans, hit_depth):
    origins, angles, lengths, labels = [], [], [], []
    for pose, scan in zip(poses, scans):
        if len(scan) == 0:
            continue
        x, y, th = pose
        hits = scan.labels > 0
        origins.append(np.tile([x, y], (len(scan), 1)))
        angles.append(th + scan.angles)
        lengths.append(np.where(hits, scan.ranges + hit_depth, scan.max_range))
        labels.append(scan.labels)
    if not origins:
        return None
    return (np.concatenate(origins), np.concatenate(angles), np.concatenate(lengths),
            np.concatenate(labels).astype(np.int64))


def observation_counts(grid, poses, scans, hit_depth=None):
    """Integer free/hit observation counts per cell for a batch of scans.

    Returns ``(free, hits)`` with shapes ``(H*W,)`` and ``(H*W, C)``.
    """
    if hit_depth is None:
        hit_depth = grid.resolution / 2
    ncell = grid.width * grid.height
    C = grid.num_classes
    free = np.zeros(ncell, dtype=np.int64)
    hits = np.zeros((ncell, C), dtype=np.int64)
    rays = _scan_rays(grid, poses, scans, hit_depth)
    if rays is None:
        return free, hits
    origins, angles, lengths, labels = rays
    trav = traverse_rays(origins, angles, lengths, grid.width, grid.height, grid.resolution)
    flat = trav.rows * grid.width + trav.cols
    last = trav.count - 1
    is_hit_step = np.zeros_like(trav.valid)
    has = (labels > 0) & (trav.count > 0)
    is_hit_step[np.nonzero(has)[0], last[has]] = True
    free_sel = trav.valid & ~is_hit_step
    free += np.bincount(flat[free_sel], minlength=ncell)
    hk, hs = np.nonzero(is_hit_step)
    hits += np.bincount(flat[hk, hs] * C + (labels[hk] - 1), minlength=ncell * C).reshape(ncell, C)
    return free, hits


def apply_counts(grid, free, hits, hit_increment=DEFAULT_HIT_INCREMENT,
                 miss_decrement=DEFAULT_MISS_DECREMENT):
    C = grid.num_classes
    y0 = grid.prior_logodds
    d_free = free_beta(C, miss_decrement) - y0
    d_hit = np.stack([hit_beta(C, c, hit_increment) for c in range(1, C + 1)]) - y0
    delta = free[:, None] * d_free + hits @ d_hit
    y = grid.logodds.reshape(-1, C + 1) + delta
    grid.logodds = np.clip(y, -LOGODDS_CLAMP, LOGODDS_CLAMP).reshape(grid.logodds.shape)
    return grid


def integrate_scans(grid, poses, scans, hit_increment=DEFAULT_HIT_INCREMENT,
                    miss_decrement=DEFAULT_MISS_DECREMENT, hit_depth=None) -> SemanticGrid:
    """Fuse a batch of scans taken at ``poses`` into ``grid`` (in place).

    Observations are reduced to integer counts per cell before touching the
    log-odds, so the result does not depend on beam or scan order.
    ``hit_depth`` extends hit beams past the measured surface so the
    endpoint lands inside the obstacle cell; defaults to half a cell.
    """
    free, hits = observation_counts(grid, poses, scans, hit_depth)
    return apply_counts(grid, free, hits, hit_increment, miss_decrement)


def integrate_scan(grid, pose, scan, **kwargs) -> SemanticGrid:
    x, y, _ = pose
    if not (0 <= x <= grid.extent[0] and 0 <= y <= grid.extent[1]):
        raise DomainError(f"pose {pose} outside the grid")
    return integrate_scans(grid, [pose], [scan], **kwargs)


# ---------------------------------------------------------------------------
# entropy


def cell_entropy(grid, cell) -> float:
    _check_cell(grid, cell)
    return float(entr(softmax(grid.logodds[cell[0], cell[1]])).sum())


def entropy_map(grid) -> np.ndarray:
    return entr(grid.probabilities()).sum(axis=-1)


def map_entropy(grid) -> float:
    return float(entropy_map(grid).sum())


# ---------------------------------------------------------------------------
# exports

UNKNOWN_COLOR = (128, 128, 128)
FREE_COLOR = (255, 255, 255)


def snapshot_pixels(grid, palette, unknown_color=UNKNOWN_COLOR) -> np.ndarray:
    """RGB image (H, W, 3) coloured by argmax class; unobserved cells get ``unknown_color``.

    ``palette`` lists RGB triples for classes 0..C.
    """
    table = np.asarray(palette, dtype=np.uint8)
    if table.shape != (grid.num_classes + 1, 3):
        raise ConfigurationError(f"palette needs {grid.num_classes + 1} RGB entries")
    img = table[grid.argmax_labels()]
    img[~grid.observed_mask()] = np.asarray(unknown_color, dtype=np.uint8)
    return img


def write_pixmap(path, pixels):
    """Binary PPM (P6); row 0 of the array is the first image row."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


def read_pixmap(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise DomainError(f"{path}: not a binary 8-bit PPM")
    w, h = int(m[1]), int(m[2])
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=m.end()).reshape(h, w, 3)


def write_text_dump(grid, path):
    """One line per cell: ``x y p_0 ... p_C`` with x, y the cell centre in metres."""
    p = grid.probabilities()
    with open(path, "w") as f:
        for r in range(grid.height):
            for c in range(grid.width):
                x, y = grid.cell_center((r, c))
                probs = " ".join(f"{v:.12g}" for v in p[r, c])
                f.write(f"{x:.6g} {y:.6g} {probs}\n")
