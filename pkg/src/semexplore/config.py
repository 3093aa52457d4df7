"""Run configuration with a flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .errors import ConfigurationError

METHODS = ("full", "mi-only", "nearest-frontier")
NORMS = ("1", "2", "inf", "fro")


@dataclass
class RunConfig:
    # scenario
    world: str = "tworooms"
    method: str = "full"
    seed: int = 0
    steps: int = 1200
    out: str = "run"
    # sensor
    num_beams: int = 36
    fov: float = 2 * math.pi
    max_range: float = 3.0
    range_sigma: float = 0.02
    semantic_error: float = 0.1
    range_discretization: float = 0.125
    # map
    hit_increment: float = 1.386
    miss_decrement: float = 0.847
    free_threshold: float = 0.6
    occ_threshold: float = 0.5
    # motion and odometry (noise per step)
    speed: float = 0.25
    odom_sigma_xy: float = 0.01
    odom_sigma_theta_deg: float = 0.5
    # loop closures
    loop_radius: float = 1.0
    loop_min_separation: int = 10
    loop_sigma_xy: float = 0.02
    loop_sigma_theta_deg: float = 1.0
    # pose graph and utility
    node_spacing: float = 0.5
    norm_p: str = "2"
    loop_boost: float = 2.0
    gn_max_iters: int = 20
    gn_tol: float = 1e-9
    # planning
    min_frontier_size: int = 3
    clearance: int = 1
    blacklist_radius_cells: float = 2.0
    replan_period: int = 40
    correction_replan: float = 0.5  # cells of estimate shift that force a replan
    follow_slack: float = 2.0

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        if str(self.norm_p) not in NORMS:
            raise ConfigurationError(f"norm_p must be one of {', '.join(NORMS)}")
        positive = ["max_range", "range_discretization", "speed", "node_spacing", "loop_radius",
                     "hit_increment", "miss_decrement", "loop_boost"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        nonneg = ["range_sigma", "odom_sigma_xy", "odom_sigma_theta_deg", "loop_sigma_xy",
                  "loop_sigma_theta_deg", "steps", "clearance", "blacklist_radius_cells"]
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if not 0 <= self.semantic_error < 1:
            raise ConfigurationError("semantic_error must lie in [0, 1)")
        if self.num_beams < 1 or self.replan_period < 1 or self.min_frontier_size < 1:
            raise ConfigurationError("num_beams, replan_period and min_frontier_size must be >= 1")
        if not (0 < self.free_threshold < 1 and 0 < self.occ_threshold < 1):
            raise ConfigurationError("thresholds must lie in (0, 1)")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()


def _coerce(field_type, name, text):
    try:
        if field_type in (int, "int"):
            return int(text)
        if field_type in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{name}: cannot parse {text!r}") from None
    return text


def field_types():
    return {f.name: f.type for f in fields(RunConfig)}


def dump_config(cfg: RunConfig) -> str:
    """Every field, one ``key = value`` line; floats use their round-trip repr."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    types = field_types()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in types:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(types[key], key, value.strip())
    base = base or RunConfig()
    return dataclasses.replace(base, **values).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
