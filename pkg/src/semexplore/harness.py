"""Run artifacts on disk and seeded batches with per-method aggregates."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics
from .config import RunConfig, dump_config
from .errors import ConfigurationError
from .explorer import RunResult, resolve_world, run_simulation
from .posegraph import write_g2o
from .semgrid import FREE_COLOR, snapshot_pixels, write_pixmap, write_text_dump
from .simworld import load_world

NODE_COLUMNS = ["id", "true_x", "true_y", "true_theta", "est_x", "est_y", "est_theta"]

# aggregated per method; failed runs are excluded and counted
AGGREGATE_METRICS = ["ate", "map_error", "mean_iou", "final_coverage", "steps_to_90", "steps"]


def summary_columns(num_classes):
    return metrics.SUMMARY_COLUMNS + metrics.iou_columns(num_classes)


def write_run(result: RunResult, out_dir) -> Path:
    """Write every artifact of a finished run into ``out_dir``.

    All files except ``timing.txt`` are a pure function of world, config and seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = result.world
    (out / "config.txt").write_text(dump_config(result.config))
    metrics.write_csv(out / "summary.csv", summary_columns(world.num_classes), [result.summary])
    rows = [{"t": s.t, "true_x": s.true_pose[0], "true_y": s.true_pose[1],
             "true_theta": s.true_pose[2], "est_x": s.est_pose[0], "est_y": s.est_pose[1],
             "est_theta": s.est_pose[2], "explored_cells": s.explored} for s in result.log.steps]
    metrics.write_csv(out / "trajectory.csv", metrics.TRAJECTORY_COLUMNS, rows)
    metrics.write_csv(out / "coverage.csv", metrics.COVERAGE_COLUMNS,
                      [{"t": t, "explored_m2": a} for t, a in metrics.coverage_curve(result.log)])
    metrics.write_csv(out / "decisions.csv", metrics.DECISION_COLUMNS,
                      [row for d in result.log.decisions for row in d.rows()])
    nodes = [{"id": k, "true_x": tp[0], "true_y": tp[1], "true_theta": tp[2],
              "est_x": ep[0], "est_y": ep[1], "est_theta": ep[2]}
             for k, (tp, ep) in enumerate(zip(result.true_nodes, result.graph.nodes))]
    metrics.write_csv(out / "nodes.csv", NODE_COLUMNS, nodes)
    write_g2o(result.graph, out / "posegraph.g2o")
    write_text_dump(result.log.grid, out / "map.txt")
    write_pixmap(out / "map.ppm", snapshot_pixels(result.log.grid, world.class_colors(FREE_COLOR)))
    if result.message:
        (out / "failure.txt").write_text(result.message + "\n")
    return out


def run_to_dir(cfg: RunConfig, out_dir=None):
    start = time.perf_counter()
    result = run_simulation(cfg)
    out = write_run(result, out_dir if out_dir is not None else cfg.out)
    (out / "timing.txt").write_text(f"wall_time_s {time.perf_counter() - start:.3f}\n")
    return result, out


def _run_summary(cfg: RunConfig):
    return run_simulation(cfg).summary


def run_batch(cfg: RunConfig, seeds, methods=None, worlds=None, workers=1):
    """Summary rows for every (world, method, seed), in that nesting order."""
    seeds = list(seeds)
    if not seeds:
        raise ConfigurationError("batch needs at least one seed")
    methods = list(methods or [cfg.method])
    worlds = list(worlds or [cfg.world])
    for w in worlds:
        load_world(resolve_world(w))  # fail early on a bad world
    jobs = [cfg.replace(world=w, method=m, seed=s) for w in worlds for m in methods for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_summary, jobs))
    return [_run_summary(j) for j in jobs]


def _values(rows, key):
    out = []
    for r in rows:
        v = r.get(key)
        if key == "steps_to_90" and v is None:
            v = np.inf  # never reached: slower than any run that did
        if v is not None:
            out.append(float(v))
    return out


def aggregate(rows, group_keys=("method",)):
    """Median and inter-quartile spread per group over the successful runs."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(r)
    out = []
    for key, members in groups.items():
        ok = [r for r in members if r["status"] != "collision"]
        agg = dict(zip(group_keys, key))
        agg.update({"runs": len(members), "failed": len(members) - len(ok)})
        for m in AGGREGATE_METRICS:
            vals = _values(ok, m)
            if vals:
                with np.errstate(invalid="ignore"):  # inf - inf when interpolating
                    q1, med, q3 = np.percentile(vals, [25, 50, 75])
                q1, med, q3 = (np.inf if np.isnan(q) else q for q in (q1, med, q3))
                agg[f"{m}_median"] = float(med)
                agg[f"{m}_iqr"] = float(q3 - q1) if np.isfinite(q3 - q1) else None
            else:
                agg[f"{m}_median"] = agg[f"{m}_iqr"] = None
        out.append(agg)
    return out


def aggregate_columns(group_keys=("method",)):
    cols = list(group_keys) + ["runs", "failed"]
    for m in AGGREGATE_METRICS:
        cols += [f"{m}_median", f"{m}_iqr"]
    return cols


def write_batch(rows, out_dir, num_classes):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_csv(out / "batch_summary.csv", summary_columns(num_classes), rows)
    metrics.write_csv(out / "batch_aggregate.csv", aggregate_columns(), aggregate(rows))
    return out
