"""Ground-truth world, noisy beam sensor, odometry and loop-closure simulation."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CollisionError, ConfigurationError, WorldParseError
from .posegraph import Pose2
from .semgrid import Scan, traverse_ray, traverse_rays

FREE_CHAR = "."
WALL_CHAR = "#"


@dataclass
class PaletteEntry:
    char: str
    name: str
    color: tuple


@dataclass
class GroundTruthWorld:
    labels: np.ndarray  # (H, W) ints, 0 = free
    resolution: float
    palette: list  # PaletteEntry for classes 1..C
    start: Pose2
    name: str = "world"

    @property
    def num_classes(self):
        return len(self.palette)

    @property
    def shape(self):
        return self.labels.shape

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def cell_of(self, x, y):
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def label_at(self, x, y):
        r, c = self.cell_of(x, y)
        if not (0 <= r < self.height and 0 <= c < self.width):
            return -1
        return int(self.labels[r, c])

    def class_colors(self, free_color=(255, 255, 255)):
        return [tuple(free_color)] + [tuple(e.color) for e in self.palette]

    def reachable_mask(self) -> np.ndarray:
        from scipy import ndimage
        free = self.labels == 0
        comp, _ = ndimage.label(free, structure=np.ones((3, 3), dtype=bool))
        r, c = self.cell_of(self.start.x, self.start.y)
        return comp == comp[r, c]

    def observable_mask(self) -> np.ndarray:
        """Reachable free cells plus the obstacle cells bordering them."""
        from scipy import ndimage
        reach = self.reachable_mask()
        border = ndimage.binary_dilation(reach, structure=np.ones((3, 3), dtype=bool))
        return reach | (border & (self.labels > 0))


def _parse_color(text, lineno):
    text = text.strip().lstrip("#")
    if len(text) != 6:
        raise WorldParseError(f"bad colour {text!r}", lineno)
    try:
        return tuple(int(text[k:k + 2], 16) for k in (0, 2, 4))
    except ValueError:
        raise WorldParseError(f"bad colour {text!r}", lineno) from None


def parse_world(text: str, name="world") -> GroundTruthWorld:
    """Parse the plain-text world format.

    Header lines ``key: value`` (``resolution``, ``classes``, ``palette``,
    ``start``) precede the grid rows. Row 0 of the grid is the first grid
    line and covers ``y`` in ``[0, resolution)``.
    """
    header = {}
    rows = []
    row_lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        if not rows and ":" in line:
            key, _, value = line.partition(":")
            key = key.strip().lower()
            if key not in ("resolution", "classes", "palette", "start"):
                raise WorldParseError(f"unknown header {key!r}", lineno)
            header[key] = (value.strip(), lineno)
            continue
        if not line:
            if rows:
                raise WorldParseError("blank line inside the grid", lineno)
            continue
        rows.append(line)
        row_lines.append(lineno)
    for key in ("resolution", "classes", "start"):
        if key not in header:
            raise WorldParseError(f"missing header {key!r}")
    value, ln = header["resolution"]
    try:
        resolution = float(value)
    except ValueError:
        raise WorldParseError(f"bad resolution {value!r}", ln) from None
    if resolution <= 0:
        raise WorldParseError("resolution must be positive", ln)
    value, ln = header["classes"]
    try:
        C = int(value)
    except ValueError:
        raise WorldParseError(f"bad class count {value!r}", ln) from None
    if C < 1:
        raise WorldParseError("need at least one class", ln)
    palette = []
    if "palette" in header:
        value, ln = header["palette"]
        for item in value.split():
            if "=" not in item or "," not in item:
                raise WorldParseError(f"bad palette entry {item!r}", ln)
            ch, _, rest = item.partition("=")
            cname, _, col = rest.partition(",")
            if len(ch) != 1 or ch == FREE_CHAR:
                raise WorldParseError(f"bad palette character {ch!r}", ln)
            if any(e.char == ch for e in palette):
                raise WorldParseError(f"duplicate palette character {ch!r}", ln)
            palette.append(PaletteEntry(ch, cname, _parse_color(col, ln)))
    else:
        ln = header["classes"][1]
        palette = [PaletteEntry(WALL_CHAR, "wall", (0, 0, 0))]
    if len(palette) != C:
        raise WorldParseError(f"palette lists {len(palette)} classes, header says {C}", ln)
    if palette[0].char != WALL_CHAR:
        raise WorldParseError(f"class 1 must be {WALL_CHAR!r}", ln)
    value, ln = header["start"]
    try:
        sx, sy, sth = (float(v) for v in value.split())
    except ValueError:
        raise WorldParseError(f"bad start pose {value!r}", ln) from None
    if not rows:
        raise WorldParseError("world has no grid rows")
    width = len(rows[0])
    lookup = {e.char: k + 1 for k, e in enumerate(palette)}
    lookup[FREE_CHAR] = 0
    labels = np.zeros((len(rows), width), dtype=np.int64)
    for r, (line, lineno) in enumerate(zip(rows, row_lines)):
        if len(line) != width:
            raise WorldParseError(f"row has {len(line)} cells, expected {width}", lineno)
        for c, ch in enumerate(line):
            if ch not in lookup:
                raise WorldParseError(f"unknown class character {ch!r} at column {c + 1}", lineno)
            labels[r, c] = lookup[ch]
    border = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    if np.any(border == 0):
        bad = row_lines[0] if np.any(labels[0] == 0) else row_lines[-1]
        for r in range(len(rows)):
            if labels[r, 0] == 0 or labels[r, -1] == 0:
                bad = row_lines[r] if 0 < r < len(rows) - 1 else bad
                break
        raise WorldParseError("world border is not sealed", bad)
    start = Pose2.make(sx, sy, sth)
    world = GroundTruthWorld(labels, resolution, palette, start, name)
    lbl = world.label_at(start.x, start.y)
    if lbl != 0:
        raise WorldParseError(f"start pose ({sx}, {sy}) is not in a free cell", header["start"][1])
    return world


def load_world(path) -> GroundTruthWorld:
    path = Path(path)
    return parse_world(path.read_text(), name=path.stem)


# ---------------------------------------------------------------------------
# random streams


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named noise source.

    Philox is counter-based; the key mixes the master seed with a CRC of the
    stream name, so streams are platform-stable and do not shift each other.
    """
    key = (int(seed) & 0xFFFFFFFF) << 32 | zlib.crc32(name.encode())
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# sensing and motion


@dataclass(frozen=True)
class SensorModel:
    num_beams: int = 36
    fov: float = 2 * math.pi
    max_range: float = 3.0
    range_sigma: float = 0.02
    semantic_error: float = 0.1

    def __post_init__(self):
        if not 0 <= self.semantic_error < 1:
            raise ConfigurationError("semantic_error must lie in [0, 1)")
        if self.range_sigma < 0:
            raise ConfigurationError("range_sigma must be non-negative")
        if self.num_beams < 1 or self.max_range <= 0:
            raise ConfigurationError("need at least one beam and a positive range")

    def beam_offsets(self):
        if self.fov >= 2 * math.pi - 1e-12:
            return 2 * math.pi * np.arange(self.num_beams) / self.num_beams
        if self.num_beams == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2, self.fov / 2, self.num_beams)


def true_ranges(world, pose, angles, max_range):
    """Exact range and class of the first obstacle along each absolute angle.

    Rays that reach ``max_range`` without hitting anything get class 0.
    """
    n = len(angles)
    trav = traverse_rays(np.tile([pose[0], pose[1]], (n, 1)), angles, max_range,
                         world.width, world.height, world.resolution)
    ranges = np.full(n, float(max_range))
    labels = np.zeros(n, dtype=np.int64)
    if trav.valid.size == 0:
        return ranges, labels
    lbl = np.where(trav.valid, world.labels[trav.rows.clip(0, world.height - 1),
                                            trav.cols.clip(0, world.width - 1)], 0)
    hit = lbl > 0
    any_hit = hit.any(axis=1)
    k = hit.argmax(axis=1)
    idx = np.nonzero(any_hit)[0]
    ranges[idx] = trav.entry[idx, k[idx]]
    labels[idx] = lbl[idx, k[idx]]
    return ranges, labels


def simulate_scan(world, true_pose, sensor: SensorModel, rng: np.random.Generator) -> Scan:
    offsets = sensor.beam_offsets()
    n = len(offsets)
    ranges, labels = true_ranges(world, true_pose, true_pose[2] + offsets, sensor.max_range)
    # fixed number of draws per scan keeps the stream aligned across outcomes
    noise = rng.standard_normal(n) * sensor.range_sigma
    flip = rng.random(n)
    pick = rng.integers(0, max(world.num_classes - 1, 1), size=n)
    hit = labels > 0
    ranges = np.where(hit, np.clip(ranges + noise, 1e-9, sensor.max_range), sensor.max_range)
    C = world.num_classes
    if C > 1:
        wrong = pick + 1
        wrong = np.where(wrong >= labels, wrong + 1, wrong)  # uniform over classes != true
        labels = np.where(hit & (flip < sensor.semantic_error), wrong, labels)
    return Scan(offsets.copy(), ranges, labels.astype(np.int64), float(sensor.max_range))


def _cov_sqrt(cov):
    cov = np.asarray(cov, dtype=float)
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate_odometry(true_motion, cov, rng: np.random.Generator) -> Pose2:
    """Motion increment plus a Gaussian sample with covariance ``cov``."""
    z = rng.standard_normal(3)
    d = np.asarray(true_motion, dtype=float) + _cov_sqrt(cov) @ z
    return Pose2.make(*d)


def line_of_sight(world, a, b) -> bool:
    """True if the segment ``a -> b`` crosses only free world cells."""
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    if length == 0:
        return world.label_at(a[0], a[1]) == 0
    trav = traverse_ray(a[:2], math.atan2(b[1] - a[1], b[0] - a[0]), length,
                        world.width, world.height, world.resolution)
    return all(world.labels[r, c] == 0 for r, c in trav.cells)


@dataclass
class LoopMeasurement:
    node: int
    measurement: Pose2


def detect_loop_closure(pose_history, current_true_pose, world, radius, min_separation,
                        noise_cov=None, rng=None) -> Optional[LoopMeasurement]:
    """Oracle loop detection against the true poses of earlier graph nodes.

    ``pose_history`` holds the true poses of all nodes, the current one
    last. Fires for the nearest node at least ``min_separation`` ids older
    than the current node within ``radius`` and in line of sight.
    """
    cur = len(pose_history) - 1
    last_eligible = cur - min_separation
    if last_eligible < 0:
        return None
    hist = np.asarray(pose_history[:last_eligible + 1], dtype=float)
    d = np.hypot(hist[:, 0] - current_true_pose[0], hist[:, 1] - current_true_pose[1])
    for j in np.argsort(d, kind="stable"):
        if d[j] > radius:
            return None
        if line_of_sight(world, hist[j], current_true_pose):
            rel = Pose2.make(*hist[j]).between(current_true_pose)
            if noise_cov is not None and rng is not None:
                rel = simulate_odometry(rel, noise_cov, rng)
            return LoopMeasurement(int(j), rel)
    return None


def motion_command(pose, target, speed):
    """Body-frame increment that turns toward ``target`` and advances up to ``speed``."""
    dx, dy = target[0] - pose[0], target[1] - pose[1]
    dist = math.hypot(dx, dy)
    if speed <= 0 or dist == 0:
        return Pose2(0.0, 0.0, 0.0)
    turn = math.atan2(dy, dx) - pose[2]
    d = min(speed, dist)
    return Pose2.make(d * math.cos(turn), d * math.sin(turn), turn)


def apply_motion(world, true_pose, delta) -> Pose2:
    """Move the true robot by a body-frame increment; raises on collision."""
    start = Pose2.make(*true_pose)
    end = start.compose(delta)
    if not line_of_sight(world, start, end):
        raise CollisionError(
            f"motion from ({start.x:.3f}, {start.y:.3f}) to ({end.x:.3f}, {end.y:.3f}) "
            f"enters an occupied cell")
    return end


def step(world, true_pose, waypoint, speed):
    """Advance toward ``waypoint`` by ``speed``; returns ``(pose, arrived)``.

    Arrival means ending within half a cell of the waypoint.
    """
    delta = motion_command(true_pose, waypoint, speed)
    pose = apply_motion(world, true_pose, delta)
    arrived = math.hypot(pose.x - waypoint[0], pose.y - waypoint[1]) <= world.resolution / 2
    return pose, arrived
