"""Session KPIs derived purely from the log.

Task completion time runs from the first tick with motion to the finish
crossing. Collision episodes merge contacts separated by less than half a
second so chattering against one cube counts once. Lateral error is measured
with the path projection against the entered path in sequential mode and
against the map's reference centerline in direct mode.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import path_core
from .sim_server import SessionLog
from .world import load_map, point_to_polyline_distance

EPISODE_MERGE_GAP = 0.5  # s


@dataclass(frozen=True)
class SessionMetrics:
    scenario: str
    mode: str
    seed: int
    completed: bool
    task_completion_time: Optional[float]
    collision_count: int
    distinct_obstacles_hit: int
    max_lateral_error: float
    path_entered_length: float

    def __post_init__(self) -> None:
        if self.completed != (self.task_completion_time is not None):
            raise ValueError("task_completion_time must be present iff completed")


def _collision_episodes(times: list[float]) -> int:
    episodes = 0
    last = None
    for t in times:
        if last is None or t - last > EPISODE_MERGE_GAP:
            episodes += 1
        last = t
    return episodes


def compute_metrics(log: SessionLog) -> SessionMetrics:
    scenario = log.scenario
    ticks = [r for r in log.records if r["type"] == "tick"]
    events = [r for r in log.records if r["type"] == "event"]
    collisions = [r for r in log.records if r["type"] == "collision"]

    t_start = next((r["t"] for r in ticks if r["v"] > 0.0), None)
    t_finish = next((r["t"] for r in events if r["name"] == "finish"), None)
    completed = t_start is not None and t_finish is not None
    completion = t_finish - t_start if completed else None

    collision_count = _collision_episodes([r["t"] for r in collisions])
    hit: set[int] = set()
    for r in collisions:
        hit.update(r["indices"])

    entered = [r for r in events if r["name"] == "path_committed"]
    path_length = entered[-1]["data"]["total_length"] if entered else 0.0

    max_lateral = 0.0
    moving = [(r["x"], r["y"]) for r in ticks if r["v"] > 0.0]
    if moving:
        if scenario.get("mode") == "sequential" and entered:
            waypoints = [tuple(w) for w in entered[-1]["data"]["waypoints"]]
            spline = path_core.build_spline(waypoints)
            max_lateral = _max_abs_lateral(spline, moving)
        elif scenario.get("mode") == "direct" and "map_doc" in scenario:
            world = load_map(json.dumps(scenario["map_doc"]))
            pts = world.centerline_array
            if pts is not None:
                for p in moving:
                    max_lateral = max(max_lateral, point_to_polyline_distance(pts, p))

    return SessionMetrics(
        scenario=scenario.get("name", "session"),
        mode=scenario.get("mode", "?"),
        seed=int(scenario.get("seed", 0)),
        completed=completed,
        task_completion_time=completion,
        collision_count=collision_count,
        distinct_obstacles_hit=len(hit),
        max_lateral_error=max_lateral,
        path_entered_length=path_length,
    )


def _max_abs_lateral(spline: path_core.PathSpline, positions: list[tuple[float, float]]) -> float:
    try:
        from scipy.spatial import cKDTree
    except ImportError:
        cKDTree = None
    xy = np.asarray(positions)
    if cKDTree is not None:
        samples = np.stack([spline.x, spline.y], axis=1)
        _, idx = cKDTree(samples).query(xy)
    else:
        idx = np.array([int(np.argmin((spline.x - px) ** 2 + (spline.y - py) ** 2))
                        for px, py in xy])
    nx, ny = -np.sin(spline.heading[idx]), np.cos(spline.heading[idx])
    lateral = (xy[:, 0] - spline.x[idx]) * nx + (xy[:, 1] - spline.y[idx]) * ny
    return float(np.abs(lateral).max())


CSV_HEADER = ("scenario,mode,seed,completed,task_completion_time_s,"
              "collisions,max_lateral_error_m,path_entered_length_m")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def export_metrics(rows: list[SessionMetrics]) -> str:
    """Render metrics as CSV with 6-significant-digit numbers."""
    lines = [CSV_HEADER]
    for m in rows:
        completion = _fmt(m.task_completion_time) if m.task_completion_time is not None else ""
        lines.append(",".join([
            m.scenario, m.mode, str(m.seed),
            "true" if m.completed else "false",
            completion, str(m.collision_count),
            _fmt(m.max_lateral_error), _fmt(m.path_entered_length),
        ]))
    return "\n".join(lines) + "\n"


def median_completion(rows: list[SessionMetrics]) -> Optional[float]:
    times = [m.task_completion_time for m in rows if m.task_completion_time is not None]
    return statistics.median(times) if times else None


def fleet_summary(rows: list[SessionMetrics]) -> dict:
    med = median_completion(rows)
    return {
        "runs": len(rows),
        "completed": sum(1 for m in rows if m.completed),
        "median_completion_s": med,
        "total_collisions": sum(m.collision_count for m in rows),
        "max_lateral_error_m": max((m.max_lateral_error for m in rows), default=math.nan),
    }
