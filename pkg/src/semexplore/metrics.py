"""Evaluation: trajectory error, map distance error, per-class IoU, coverage."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .planner import OCCUPIED, UNKNOWN, classify_cells

# Undefined metrics are returned as None and written to CSV as this token.
UNDEFINED = "undefined"


@dataclass
class StepRecord:
    t: int
    true_pose: tuple
    est_pose: tuple
    explored: int  # cells, running maximum


@dataclass
class RunLog:
    resolution: float
    steps: list = field(default_factory=list)
    grid: object = None  # final SemanticGrid
    decisions: list = field(default_factory=list)

    def record(self, t, true_pose, est_pose, explored):
        if self.steps:
            last = self.steps[-1]
            if t <= last.t:
                raise DomainError("time index must increase")
            explored = max(explored, last.explored)
        self.steps.append(StepRecord(t, tuple(map(float, true_pose)), tuple(map(float, est_pose)),
                                     int(explored)))


def align_se2(estimated, truth):
    """Rotation ``R`` and translation ``t`` minimising ``|R p + t - q|`` (no scale)."""
    P = np.asarray(estimated, dtype=float)[:, :2]
    Q = np.asarray(truth, dtype=float)[:, :2]
    mp, mq = P.mean(axis=0), Q.mean(axis=0)
    S = (Q - mq).T @ (P - mp)
    U, _, Vt = np.linalg.svd(S)
    D = np.diag([1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    R = U @ D @ Vt
    return R, mq - R @ mp


def ate(estimated, truth) -> float:
    """RMSE of positions after rigid 2D alignment of ``estimated`` onto ``truth``."""
    if len(estimated) != len(truth):
        raise DomainError(f"trajectory lengths differ: {len(estimated)} vs {len(truth)}")
    if len(estimated) < 2:
        raise DomainError("need at least two poses")
    P = np.asarray(estimated, dtype=float)[:, :2]
    Q = np.asarray(truth, dtype=float)[:, :2]
    R, t = align_se2(P, Q)
    res = P @ R.T + t - Q
    return float(np.sqrt(np.mean(np.sum(res ** 2, axis=1))))


def _labels_of(estimate):
    if hasattr(estimate, "logodds"):
        return classify_cells(estimate)
    return np.asarray(estimate)


def map_error(estimate, world) -> Optional[float]:
    """Mean distance (m) from estimated-occupied cells to the nearest true obstacle.

    ``estimate`` is a SemanticGrid or a label array from ``classify_cells``.
    Returns None when nothing is estimated occupied.
    """
    labels = _labels_of(estimate)
    if labels.shape != world.shape:
        raise DomainError("estimate and world grids differ in shape")
    occ = labels == OCCUPIED
    if not occ.any():
        return None
    dist = ndimage.distance_transform_edt(world.labels == 0) * world.resolution
    return float(dist[occ].mean())


def iou_per_class(grid, world, c) -> Optional[float]:
    """IoU of argmax class ``c`` against the truth, over cells moved off the prior."""
    if not 1 <= c <= world.num_classes:
        raise DomainError(f"class {c} outside 1..{world.num_classes}")
    if grid.shape != world.shape:
        raise DomainError("estimate and world grids differ in shape")
    seen = grid.observed_mask()
    est = (grid.argmax_labels() == c) & seen
    tru = (world.labels == c) & seen
    union = np.count_nonzero(est | tru)
    if union == 0:
        return None
    return np.count_nonzero(est & tru) / union


def mean_iou(grid, world):
    vals = [iou_per_class(grid, world, c) for c in range(1, world.num_classes + 1)]
    defined = [v for v in vals if v is not None]
    return (float(np.mean(defined)) if defined else None), vals


def explored_cells(grid, **thresholds) -> int:
    return int(np.count_nonzero(classify_cells(grid, **thresholds) != UNKNOWN))


def coverage_curve(log: RunLog):
    """``(t, explored m^2)`` per recorded step."""
    a = log.resolution ** 2
    return [(s.t, s.explored * a) for s in log.steps]


def steps_to_coverage(curve, target_area) -> Optional[int]:
    for t, area in curve:
        if area >= target_area - 1e-12:
            return t
    return None


# ---------------------------------------------------------------------------
# CSV output

SUMMARY_COLUMNS = ["world", "method", "seed", "status", "steps", "ate", "map_error",
                   "mean_iou", "final_coverage", "coverage_fraction", "steps_to_90",
                   "num_nodes", "num_loops"]
COVERAGE_COLUMNS = ["t", "explored_m2"]
TRAJECTORY_COLUMNS = ["t", "true_x", "true_y", "true_theta", "est_x", "est_y", "est_theta",
                      "explored_cells"]
DECISION_COLUMNS = ["replan", "t", "frontier_id", "goal_x", "goal_y", "mi", "cost", "d_opt",
                    "utility", "n_loops", "chosen_id"]


def fmt(v) -> str:
    """Deterministic text for CSV cells; floats use the shortest round-trip repr."""
    if v is None:
        return UNDEFINED
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return UNDEFINED
        return repr(v)
    return str(v)


def iou_columns(num_classes):
    return [f"iou_{c}" for c in range(1, num_classes + 1)]


def write_csv(path, columns, rows):
    """``rows`` are dicts; missing keys are written as undefined."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(k)) for k in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parse_value(text):
    if text == UNDEFINED or text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text
