"""Bundled map access and the stadium course builder.

The default course is a stadium loop (two straights joined by semicircles)
of roughly 30 m centerline length, lined on both sides with 0.2 m cube
obstacles. Its reference centerline runs one full lap plus a short overrun
so a lap ends at speed on the finish line instead of braking onto it.
"""

from __future__ import annotations

import importlib.resources
import math

import numpy as np

from .world import Obstacle, WorldMap, load_map


def default_map() -> WorldMap:
    """Load the bundled default course."""
    text = importlib.resources.files("telepath.data").joinpath("default_map.json").read_text()
    return load_map(text)


def _stadium_pose(s: float, radius: float, straight: float) -> tuple[float, float, float]:
    """Pose (x, y, heading) at arc length s along the stadium loop (CCW)."""
    arc = math.pi * radius
    loop = 2.0 * straight + 2.0 * arc
    s = s % loop
    half = straight / 2.0
    if s < straight:
        return (-half + s, -radius, 0.0)
    s -= straight
    if s < arc:
        theta = -math.pi / 2.0 + s / radius
        return (half + radius * math.cos(theta), radius * math.sin(theta),
                theta + math.pi / 2.0)
    s -= arc
    if s < straight:
        return (half - s, radius, math.pi)
    s -= straight
    theta = math.pi / 2.0 + s / radius
    return (-half + radius * math.cos(theta), radius * math.sin(theta),
            theta + math.pi / 2.0)


def make_stadium_map(radius: float = 4.0, straight: float = 2.5,
                     lane_offset: float = 0.75, obstacle_spacing: float = 1.0,
                     overrun: float = 0.5, centerline_ds: float = 0.25,
                     name: str = "stadium-30m") -> WorldMap:
    """Build the foam-cube stadium course.

    ``lane_offset`` is the lateral distance from the centerline to each cube
    row; ``overrun`` extends the reference centerline past the finish line.
    """
    arc = math.pi * radius
    loop = 2.0 * straight + 2.0 * arc

    s_values = np.arange(0.0, loop + overrun, centerline_ds)
    if loop + overrun - s_values[-1] > 1e-9:
        s_values = np.append(s_values, loop + overrun)
    centerline = tuple(
        (round(p[0], 6), round(p[1], 6))
        for p in (_stadium_pose(float(s), radius, straight) for s in s_values)
    )

    obstacles = []
    n_stations = int(loop / obstacle_spacing)
    for i in range(n_stations):
        x, y, heading = _stadium_pose(i * obstacle_spacing, radius, straight)
        nx, ny = -math.sin(heading), math.cos(heading)
        for side in (1.0, -1.0):
            obstacles.append(Obstacle(
                center=(round(x + side * lane_offset * nx, 6),
                        round(y + side * lane_offset * ny, 6)),
                half_extents=(0.1, 0.1),
                rotation=round(heading, 6),
            ))

    sx, sy, sh = _stadium_pose(0.0, radius, straight)
    extent_x = straight / 2.0 + radius + lane_offset + 0.5
    extent_y = radius + lane_offset + 0.5
    return WorldMap(
        name=name,
        bounds=((-extent_x, -extent_y), (extent_x, extent_y)),
        start_pose=(sx, sy, sh),
        finish_line=((sx, sy + 0.6), (sx, sy - 0.6)),
        obstacles=tuple(obstacles),
        reference_centerline=centerline,
    )
