"""Semantic Shannon mutual information between future beams and the grid.

The per-ray estimate follows the closed form: for a ray crossing cells
``1..n`` the outcome "hit in cell k with class c" has probability
``p_k(c) * prod_{i<k} p_i(0)`` and updates the crossed cells with the
inverse observation model. The information of an outcome is the sum of the
per-cell KL divergences between updated and current cell distributions.
Outcomes where the beam leaves the sensing range without a return are not
scored, which (together with cell deduplication) makes the value a lower
bound on the exact mutual information.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr, logsumexp, softmax

from .errors import ConfigurationError, DomainError
from .semgrid import (DEFAULT_HIT_INCREMENT, DEFAULT_MISS_DECREMENT, SemanticGrid,
                      free_beta, hit_beta, traverse_ray, traverse_rays)


@dataclass(frozen=True)
class SensorConfig:
    num_beams: int = 36
    fov: float = 2 * math.pi
    max_range: float = 3.0
    range_discretization: float = 0.125
    hit_increment: float = DEFAULT_HIT_INCREMENT
    miss_decrement: float = DEFAULT_MISS_DECREMENT

    def __post_init__(self):
        if self.num_beams < 1:
            raise ConfigurationError("num_beams must be >= 1")
        if self.max_range <= 0:
            raise ConfigurationError("max_range must be positive")
        if self.range_discretization <= 0:
            raise ConfigurationError("range_discretization must be positive")

    def beam_offsets(self) -> np.ndarray:
        """Beam directions relative to the robot heading."""
        if self.fov >= 2 * math.pi - 1e-12:
            return 2 * math.pi * np.arange(self.num_beams) / self.num_beams
        if self.num_beams == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2, self.fov / 2, self.num_beams)


@dataclass
class MIEstimate:
    total: float
    per_pose: list
    counted: set = field(default_factory=set)


def h_fn(x, y):
    """Information of moving a cell from log-odds ``y`` to ``x + y``.

    ``log(1'exp(y) / 1'exp(x+y)) + x' softmax(x+y)``, i.e. the KL divergence
    of the updated distribution from the current one. Broadcasts over
    leading axes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DomainError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    z = x + y
    return logsumexp(y, axis=-1) - logsumexp(z, axis=-1) + np.sum(x * softmax(z, axis=-1), axis=-1)


def h_fn_printed(x, y):
    """Kernel with the current log-odds ``y`` in the linear term.

    Kept for reference only; it is not a divergence and can be negative
    (``h_fn_printed([0, 1], [0, 0]) < 0``), so the estimators use :func:`h_fn`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DomainError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    z = x + y
    return logsumexp(y, axis=-1) - logsumexp(z, axis=-1) + np.sum(y * softmax(z, axis=-1), axis=-1)


def measurement_pdf(grid: SemanticGrid, traversal, hit_cell, c: int) -> float:
    """Density (per metre) of a return at range inside ``hit_cell`` with label ``c``."""
    if not 1 <= c <= grid.num_classes:
        raise DomainError(f"class {c} outside [1, {grid.num_classes}]")
    try:
        k = traversal.cells.index(tuple(hit_cell))
    except ValueError:
        raise DomainError(f"cell {hit_cell} not on the ray") from None
    p = grid.probabilities()
    d = traversal.chords[k]
    free_before = 1.0
    for r, col in traversal.cells[:k]:
        free_before *= p[r, col, 0]
    return float(p[hit_cell[0], hit_cell[1], c] / d * free_before)


class MIContext:
    """Per-cell quantities of a frozen grid snapshot shared by all rays.

    ``free_gain[r, c]`` is the information of a pass-through (free) update of
    the cell and ``hit_gain[r, c, k-1]`` that of a class-k hit.
    """

    def __init__(self, grid: SemanticGrid, cfg: SensorConfig):
        self.grid = grid
        self.cfg = cfg
        C = grid.num_classes
        y = grid.logodds
        y0 = grid.prior_logodds
        self.prob = softmax(y, axis=-1).reshape(-1, C + 1)
        self.free_gain = h_fn(free_beta(C, cfg.miss_decrement) - y0, y).reshape(-1)
        hit_inc = np.stack([hit_beta(C, c, cfg.hit_increment) for c in range(1, C + 1)]) - y0
        self.hit_gain = np.stack([h_fn(hit_inc[k], y) for k in range(C)], axis=-1).reshape(-1, C)

    def rays_mi(self, origins, angles, counted: set) -> np.ndarray:
        """MI of each ray in order; cells go to ``counted`` on first traversal."""
        g = self.grid
        trav = traverse_rays(origins, angles, self.cfg.max_range, g.width, g.height, g.resolution)
        n = trav.valid.shape[0]
        if trav.valid.size == 0:
            return np.zeros(n)
        ids = np.where(trav.valid, trav.rows * g.width + trav.cols, 0)
        flat_ids = ids[trav.valid]
        first = np.zeros(flat_ids.shape, dtype=bool)
        _, idx = np.unique(flat_ids, return_index=True)
        first[idx] = True
        if counted:
            first &= ~np.isin(flat_ids, np.fromiter(counted, dtype=np.int64, count=len(counted)))
        owner = np.zeros(trav.valid.shape, dtype=bool)
        owner[trav.valid] = first
        counted.update(flat_ids.tolist())

        p0 = np.where(trav.valid, self.prob[ids, 0], 1.0)
        pc = np.where(trav.valid[..., None], self.prob[ids, 1:], 0.0)
        fg = np.where(owner, self.free_gain[ids], 0.0)
        hg = np.where(owner[..., None], self.hit_gain[ids], 0.0)
        reach = np.cumprod(np.concatenate([np.ones((n, 1)), p0[:, :-1]], axis=1), axis=1)
        free_info = np.cumsum(np.concatenate([np.zeros((n, 1)), fg[:, :-1]], axis=1), axis=1)
        per_step = reach * np.sum(pc * (free_info[..., None] + hg), axis=-1)
        return np.maximum(per_step.sum(axis=1), 0.0)


def ray_mutual_information(grid, pose, beam_angle, cfg: SensorConfig, counted=None) -> float:
    """MI of one beam at ``beam_angle`` relative to the pose heading.

    The integral over range is exact: within a cell both the return density
    and the induced map update are constant, so integrating over
    ``range_discretization`` sub-intervals aligned to cell boundaries
    collapses to one term per cell.
    """
    if counted is None:
        counted = set()
    x, y, th = pose
    ctx = MIContext(grid, cfg)
    return float(ctx.rays_mi(np.array([[x, y]]), np.array([th + beam_angle]), counted)[0])


def path_mutual_information(grid, poses, cfg: SensorConfig, context=None) -> MIEstimate:
    """Lower bound on the MI of full scans at every pose, on a frozen grid.

    A single ``counted`` set is shared across the horizon, so a cell is
    scored only by the first ray that crosses it.
    """
    counted: set = set()
    if len(poses) == 0:
        return MIEstimate(0.0, [], counted)
    ctx = context if context is not None else MIContext(grid, cfg)
    offsets = cfg.beam_offsets()
    poses = np.asarray(poses, dtype=float)
    origins = np.repeat(poses[:, :2], len(offsets), axis=0)
    angles = (poses[:, 2:3] + offsets[None, :]).reshape(-1)
    per_ray = ctx.rays_mi(origins, angles, counted)
    per_pose = per_ray.reshape(len(poses), len(offsets)).sum(axis=1)
    return MIEstimate(float(per_pose.sum()), per_pose.tolist(), counted)


def brute_force_mi(grid, pose, beam_angle, cfg: SensorConfig, max_cells=6, max_classes=3) -> float:
    """Exact MI between the crossed cells and a noiseless beam, by enumeration.

    Every joint class assignment of the crossed cells is enumerated. The
    beam stops at the first non-free cell and reports its class; its range
    is uniform over that cell's chord, discretized into sub-intervals of at
    most ``range_discretization``. An all-free ray produces the miss outcome.
    Posteriors over assignments are computed by Bayes' rule and
    ``H(cells) - E_z H(cells | z)`` is returned.
    """
    if grid.num_classes > max_classes:
        raise DomainError(f"brute force limited to C <= {max_classes}")
    x, y, th = pose
    trav = traverse_ray((x, y), th + beam_angle, cfg.max_range, grid.width, grid.height,
                        grid.resolution)
    n = len(trav)
    if n > max_cells:
        raise DomainError(f"ray crosses {n} cells; brute force limited to {max_cells}")
    if n == 0:
        return 0.0
    K = grid.num_classes + 1
    p = grid.probabilities()
    cell_p = np.array([p[r, c] for r, c in trav.cells])  # (n, K)
    subs = [max(1, math.ceil(d / cfg.range_discretization - 1e-12)) for d in trav.chords]
    # outcome index layout: [cell k, sub j, class c] blocks, then miss
    offsets = np.concatenate([[0], np.cumsum([s * (K - 1) for s in subs])])
    n_out = int(offsets[-1]) + 1
    configs = np.array(list(itertools.product(range(K), repeat=n)))
    prior = np.prod(cell_p[np.arange(n), configs], axis=1)
    joint = np.zeros((len(configs), n_out))
    nonfree = configs != 0
    first = np.where(nonfree.any(axis=1), nonfree.argmax(axis=1), -1)
    for m, k in enumerate(first):
        if k < 0:
            joint[m, -1] = prior[m]
            continue
        c = configs[m, k]
        for j in range(subs[k]):
            joint[m, offsets[k] + j * (K - 1) + (c - 1)] = prior[m] / subs[k]
    pz = joint.sum(axis=0)
    h_prior = float(entr(prior).sum())
    h_post = 0.0
    for z in np.nonzero(pz > 0)[0]:
        post = joint[:, z] / pz[z]
        h_post += pz[z] * float(entr(post).sum())
    return h_prior - h_post
