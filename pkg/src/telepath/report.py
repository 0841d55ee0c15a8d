"""Run figures rendered next to the exported CSV.

The comparison figure mirrors the study's completion-time boxplots; the
course figure draws the track, cubes, entered path and driven trajectory of
one session log.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import SessionMetrics
from .sim_server import SessionLog
from .world import WorldMap, load_map

FLEET_LABELS = {"bot_direct": "Direct (bot)", "bot_sequential": "Sequential (bot)"}


def completion_time_figure(rows: list[SessionMetrics], path: str | Path) -> Path:
    """Boxplot of lap times per fleet, one marker per seed."""
    fleets: dict[str, list[float]] = {}
    for m in rows:
        if m.task_completion_time is not None:
            fleets.setdefault(m.scenario, []).append(m.task_completion_time)
    fig, ax = plt.subplots(figsize=(6, 4))
    names = sorted(fleets)
    data = [fleets[n] for n in names]
    ax.boxplot(data, tick_labels=[FLEET_LABELS.get(n, n) for n in names])
    for i, values in enumerate(data, start=1):
        ax.plot(np.full(len(values), i), values, "o", color="tab:gray",
                markersize=4, alpha=0.7)
    ax.set_ylabel("task completion time [s]")
    ax.set_title("Lap time per interaction concept")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def _draw_world(ax, world: WorldMap) -> None:
    for obs in world.obstacles:
        corners = np.array(obs.corners() + [obs.corners()[0]])
        ax.fill(corners[:, 0], corners[:, 1], color="tab:blue", alpha=0.8, lw=0)
    if world.centerline_array is not None:
        pts = world.centerline_array
        ax.plot(pts[:, 0], pts[:, 1], "--", color="0.6", lw=0.8, label="reference centerline")
    (x1, y1), (x2, y2) = world.finish_line
    ax.plot([x1, x2], [y1, y2], color="black", lw=2, label="finish line")
    sx, sy, _ = world.start_pose
    ax.plot(sx, sy, "k^", markersize=8)


def trajectory_figure(log: SessionLog, path: str | Path) -> Path:
    """Track map with the driven trajectory from one session log."""
    world = load_map(json.dumps(log.scenario["map_doc"]))
    ticks = [r for r in log.records if r["type"] == "tick"]
    xy = np.array([[r["x"], r["y"]] for r in ticks]) if ticks else np.zeros((0, 2))

    fig, ax = plt.subplots(figsize=(7, 6))
    _draw_world(ax, world)
    committed = [r for r in log.records
                 if r["type"] == "event" and r["name"] == "path_committed"]
    if committed:
        wps = np.array(committed[-1]["data"]["waypoints"])
        ax.plot(wps[:, 0], wps[:, 1], "s", color="tab:green", markersize=3,
                label="entered waypoints")
    if len(xy):
        ax.plot(xy[:, 0], xy[:, 1], color="tab:red", lw=1.2, label="driven trajectory")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    name = log.scenario.get("name", "session")
    mode = log.scenario.get("mode", "")
    ax.set_title(f"{name} ({mode}, seed {log.scenario.get('seed', 0)})")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
