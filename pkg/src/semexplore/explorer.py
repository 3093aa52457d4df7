"""Closed-loop exploration: sense, map, plan, score, select, follow."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .config import RunConfig
from .errors import CollisionError, ConfigurationError
from .infotheory import MIContext, SensorConfig, path_mutual_information
from .planner import (FAILED, UNREACHABLE, Blacklist, PlannedPath, astar, blacklist_update,
                      classify_cells, detect_frontiers, frontier_goal, traversable)
from .posegraph import IDENTITY, Pose2, PoseGraph, graph_d_opt, optimize
from .semgrid import Scan, integrate_scans, new_grid
from .simworld import (GroundTruthWorld, SensorModel, apply_motion, detect_loop_closure,
                       load_world, motion_command, simulate_odometry, simulate_scan, stream)
from .utility import PathCandidate, hallucinate_graph, select_action, shannon_renyi_utility

WORLD_DIR = Path(__file__).parent / "worlds"

COMPLETE = "complete"
BUDGET = "budget"
COLLISION = "collision"


def resolve_world(name) -> Path:
    """A path to an existing file, or the name of a bundled world."""
    p = Path(name)
    if p.is_file():
        return p
    bundled = WORLD_DIR / f"{p.stem}.txt"
    if bundled.is_file():
        return bundled
    raise ConfigurationError(f"world {name!r} not found (bundled: {', '.join(bundled_worlds())})")


def bundled_worlds():
    return sorted(q.stem for q in WORLD_DIR.glob("*.txt"))


def step_covariance(cfg: RunConfig):
    th = math.radians(cfg.odom_sigma_theta_deg)
    return np.diag([cfg.odom_sigma_xy ** 2, cfg.odom_sigma_xy ** 2, th ** 2])


def loop_covariance(cfg: RunConfig):
    th = math.radians(cfg.loop_sigma_theta_deg)
    return np.diag([cfg.loop_sigma_xy ** 2, cfg.loop_sigma_xy ** 2, th ** 2])


def _information(cov):
    # a small floor keeps noise-free configurations finite
    return np.linalg.inv(cov + 1e-12 * np.eye(3))


@dataclass
class StoredScan:
    node: int
    offset: Pose2  # pose relative to the node estimate at capture time
    scan: Scan


@dataclass
class Decision:
    replan: int
    t: int
    candidates: list
    chosen: Optional[PathCandidate]

    def rows(self):
        chosen = self.chosen.frontier_id if self.chosen is not None else -1
        for c in self.candidates:
            yield {"replan": self.replan, "t": self.t, "frontier_id": c.frontier_id,
                   "goal_x": c.goal_xy[0], "goal_y": c.goal_xy[1], "mi": c.mi, "cost": c.cost,
                   "d_opt": c.d_opt, "utility": c.utility, "n_loops": c.n_loops,
                   "chosen_id": chosen}


@dataclass
class RunResult:
    config: RunConfig
    world: GroundTruthWorld
    status: str
    log: metrics.RunLog
    graph: PoseGraph
    true_nodes: list
    message: str = ""
    summary: dict = field(default_factory=dict)

    @property
    def failed(self):
        return self.status == COLLISION


def score(method, d_opt, mi, cost, eps_cost):
    if method == "full":
        return shannon_renyi_utility(d_opt, mi, cost, eps_cost)
    if method == "mi-only":
        return mi / max(cost, eps_cost)
    return -cost


class Explorer:
    """One simulated exploration run; all randomness comes from ``cfg.seed``."""

    def __init__(self, cfg: RunConfig, world: GroundTruthWorld):
        self.cfg = cfg.validate()
        self.world = world
        self.res = world.resolution
        self.sensor = SensorModel(cfg.num_beams, cfg.fov, cfg.max_range, cfg.range_sigma,
                                  cfg.semantic_error)
        self.mi_cfg = SensorConfig(cfg.num_beams, cfg.fov, cfg.max_range, cfg.range_discretization,
                                   cfg.hit_increment, cfg.miss_decrement)
        self.rng_sensor = stream(cfg.seed, "sensor")
        self.rng_odom = stream(cfg.seed, "odometry")
        self.rng_loop = stream(cfg.seed, "loop")
        self.step_cov = step_covariance(cfg)
        self.loop_info = _information(loop_covariance(cfg))
        steps_per_node = cfg.node_spacing / cfg.speed
        self.pred_odom_info = _information(steps_per_node * self.step_cov)
        self.norm_p = cfg.norm_p

        self.grid = self._empty_grid()
        self.true_pose = world.start
        self.graph = PoseGraph()
        self.graph.add_node(world.start)
        self.true_nodes = [world.start]
        self.offset = IDENTITY  # odometry since the last node
        self.offset_steps = 0
        self.offset_dist = 0.0
        self.scans: list = []
        self.map_dirty = False
        self.blacklist = Blacklist(cfg.blacklist_radius_cells * self.res)
        self.log = metrics.RunLog(self.res)
        self.decisions: list = []
        self.replans = 0
        self.n_loops = 0
        self.corrected = False  # set when a loop closure moves the current estimate
        self.t = 0

    # -- state -------------------------------------------------------------

    def _empty_grid(self):
        return new_grid(self.world.width, self.world.height, self.res, self.world.num_classes)

    @property
    def est_pose(self) -> Pose2:
        return self.graph.nodes[-1].compose(self.offset)

    def _integrate(self, grid, stored):
        poses = [self.graph.nodes[s.node].compose(s.offset) for s in stored]
        integrate_scans(grid, poses, [s.scan for s in stored], self.cfg.hit_increment,
                        self.cfg.miss_decrement)

    def rebuild_map(self):
        """Re-fuse every stored scan at its current (optimized) pose estimate."""
        grid = self._empty_grid()
        self._integrate(grid, self.scans)
        self.grid = grid
        self.map_dirty = False

    def labels(self):
        return classify_cells(self.grid, self.cfg.free_threshold, self.cfg.occ_threshold)

    def sense(self):
        scan = simulate_scan(self.world, self.true_pose, self.sensor, self.rng_sensor)
        stored = StoredScan(len(self.graph.nodes) - 1, self.offset, scan)
        self.scans.append(stored)
        self._integrate(self.grid, [stored])

    def record(self, labels=None):
        if labels is None:
            labels = self.labels()
        explored = int(np.count_nonzero(labels != 2))
        self.log.record(self.t, self.true_pose, self.est_pose, explored)

    # -- motion and graph --------------------------------------------------

    def move(self, target):
        delta = motion_command(self.est_pose, target, self.cfg.speed)
        self.true_pose = apply_motion(self.world, self.true_pose, delta)
        noisy = simulate_odometry(delta, self.step_cov, self.rng_odom)
        self.offset = self.offset.compose(noisy)
        self.offset_steps += 1
        self.offset_dist += math.hypot(delta.x, delta.y)
        if self.offset_dist >= self.cfg.node_spacing - 1e-9:
            self.add_node()

    def add_node(self):
        last = len(self.graph.nodes) - 1
        info = _information(self.offset_steps * self.step_cov)
        q = self.graph.add_node(self.est_pose)
        self.graph.add_odometry_edge(last, q, self.offset, info)
        self.true_nodes.append(self.true_pose)
        self.offset = IDENTITY
        self.offset_steps = 0
        self.offset_dist = 0.0
        loop = detect_loop_closure(self.true_nodes, self.true_pose, self.world, self.cfg.loop_radius,
                                   self.cfg.loop_min_separation, loop_covariance(self.cfg),
                                   self.rng_loop)
        if loop is not None:
            self.graph.add_loop_edge(loop.node, q, loop.measurement, self.loop_info)
            self.n_loops += 1
            before = self.graph.nodes[q]
            self.graph = optimize(self.graph, self.cfg.gn_max_iters, self.cfg.gn_tol).graph
            self.map_dirty = True
            if before.distance(self.graph.nodes[q]) > self.cfg.correction_replan * self.res:
                self.corrected = True

    # -- planning ----------------------------------------------------------

    def candidates(self, labels):
        cfg = self.cfg
        frontiers = detect_frontiers(labels, cfg.min_frontier_size, self.res)
        passable = traversable(labels, cfg.clearance)
        est = self.est_pose
        start = self.grid.cell_of(est.x, est.y)
        ctx = MIContext(self.grid, self.mi_cfg)
        out = []
        for f in frontiers:
            if self.blacklist.contains(f.centroid, self.replans):
                continue
            goal = frontier_goal(f, passable, self.res)
            if goal is None:
                blacklist_update(self.blacklist, f.centroid, UNREACHABLE, self.replans)
                continue
            goal_xy = self.grid.cell_center(goal)
            if self.blacklist.contains(goal_xy, self.replans):
                continue
            path = astar(labels, start, goal, cfg.clearance, self.res, passable)
            if path is None:
                blacklist_update(self.blacklist, goal_xy, UNREACHABLE, self.replans)
                continue
            # the robot sits somewhere inside the start cell; begin the path there
            path = PlannedPath(path.cells, [(est.x, est.y)] + path.waypoints[1:],
                               _polyline_length([(est.x, est.y)] + path.waypoints[1:]))
            poses = path.sample(cfg.node_spacing)
            mi = path_mutual_information(self.grid, poses, self.mi_cfg, ctx).total
            hall = hallucinate_graph(self.graph_with_current(), path, self.pred_odom_info,
                                     cfg.loop_radius, self.loop_info, cfg.node_spacing, labels,
                                     self.res, cfg.loop_min_separation)
            d_opt = graph_d_opt(hall, self.norm_p, cfg.loop_boost)
            cand = PathCandidate(f.index, goal, path, mi, path.length, d_opt,
                                 n_loops=len(hall.loop_edges) - len(self.graph.loop_edges),
                                 goal_xy=goal_xy)
            cand.utility = score(cfg.method, d_opt, mi, path.length, self.res / 2)
            out.append(cand)
        return out

    def graph_with_current(self):
        """Real graph plus the current pose as a node, when the robot is off-node."""
        if self.offset_steps == 0:
            return self.graph
        g = self.graph.copy()
        q = g.add_node(self.est_pose)
        g.add_odometry_edge(q - 1, q, self.offset, _information(self.offset_steps * self.step_cov))
        return g

    def plan(self):
        if self.map_dirty:
            self.rebuild_map()
        labels = self.labels()
        cands = self.candidates(labels)
        chosen = select_action(cands)
        self.decisions.append(Decision(self.replans, self.t, cands, chosen))
        self.replans += 1
        return chosen

    # -- main loop ---------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        status, message = BUDGET, ""
        self.sense()
        self.record()
        current = None
        s = 0.0
        since_plan = 0
        budget_steps = 0
        try:
            while self.t < cfg.steps:
                if current is None or since_plan >= cfg.replan_period or self.corrected:
                    self.corrected = False
                    current = self.plan()
                    since_plan, s = 0, 0.0
                    if current is None:
                        status = COMPLETE
                        break
                    budget_steps = int(math.ceil(cfg.follow_slack * current.path.length / cfg.speed)) + 10
                path = current.path
                end = path.waypoints[-1]
                s = min(s + cfg.speed, path.length)
                target = _point_at(path, s)
                self.t += 1
                since_plan += 1
                self.move(target)
                self.sense()
                self.record()
                est = self.est_pose
                if s >= path.length and math.hypot(est.x - end[0], est.y - end[1]) <= self.res / 2:
                    current = None  # arrived
                elif since_plan > budget_steps:
                    blacklist_update(self.blacklist, current.goal_xy, FAILED, self.replans)
                    current = None
        except CollisionError as exc:
            status, message = COLLISION, str(exc)
        if self.scans:
            self.rebuild_map()
        self.log.grid = self.grid
        self.log.decisions = self.decisions
        result = RunResult(cfg, self.world, status, self.log, self.graph, self.true_nodes, message)
        result.summary = summarize(result)
        return result


def _polyline_length(points):
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(p, axis=0).T)))


def _point_at(path: PlannedPath, s):
    pts = np.asarray(path.waypoints, dtype=float)
    if len(pts) == 1:
        return tuple(pts[0])
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1))
    f = (s - cum[k]) / seg_len[k] if seg_len[k] > 0 else 1.0
    p = pts[k] + min(max(f, 0.0), 1.0) * seg[k]
    return float(p[0]), float(p[1])


def observable_area(world):
    return float(np.count_nonzero(world.observable_mask())) * world.resolution ** 2


def summarize(result: RunResult) -> dict:
    cfg, world, log = result.config, result.world, result.log
    est = result.graph.as_array()
    truth = np.asarray(result.true_nodes, dtype=float)
    ate = metrics.ate(est, truth) if len(est) >= 2 else None
    mean_iou, ious = metrics.mean_iou(log.grid, world)
    curve = metrics.coverage_curve(log)
    final = curve[-1][1] if curve else 0.0
    target = observable_area(world)
    row = {"world": world.name, "method": cfg.method, "seed": cfg.seed, "status": result.status,
           "steps": log.steps[-1].t if log.steps else 0, "ate": ate,
           "map_error": metrics.map_error(log.grid, world), "mean_iou": mean_iou,
           "final_coverage": final, "coverage_fraction": final / target,
           "steps_to_90": metrics.steps_to_coverage(curve, 0.9 * target),
           "num_nodes": len(result.graph.nodes), "num_loops": len(result.graph.loop_edges)}
    for c, v in enumerate(ious, 1):
        row[f"iou_{c}"] = v
    return row


def run_simulation(cfg: RunConfig, world: GroundTruthWorld | None = None) -> RunResult:
    if world is None:
        world = load_world(resolve_world(cfg.world))
    return Explorer(cfg, world).run()
