"""Premapped environment: track bounds, box obstacles, start and finish.

Maps are authored as JSON files (schema ``telepath-map/1``). Obstacles are
oriented boxes; collision uses the separating-axis test with a closed-overlap
convention (touching counts), which is the conservative choice for a safety
KPI. All geometry here is static for the whole session.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

MAP_FORMAT = "telepath-map/1"

Point = tuple[float, float]


class ParseError(ValueError):
    """The map file is not well-formed."""


class ValidationError(ValueError):
    """The map file parsed but violates an invariant."""


@dataclass(frozen=True)
class Obstacle:
    center: Point
    half_extents: Point
    rotation: float = 0.0

    def corners(self) -> list[Point]:
        cx, cy = self.center
        hx, hy = self.half_extents
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        out = []
        for lx, ly in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
            out.append((cx + c * lx - s * ly, cy + s * lx + c * ly))
        return out


@dataclass(frozen=True)
class WorldMap:
    name: str
    bounds: tuple[Point, Point]                    # (min corner, max corner)
    start_pose: tuple[float, float, float]
    finish_line: tuple[Point, Point]
    obstacles: tuple[Obstacle, ...] = ()
    reference_centerline: Optional[tuple[Point, ...]] = None

    @cached_property
    def _obstacle_corners(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 4, 2))
        return np.array([o.corners() for o in self.obstacles])

    @cached_property
    def _obstacle_centers(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 2))
        return np.array([o.center for o in self.obstacles])

    @cached_property
    def _obstacle_radii(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros(0)
        return np.array([math.hypot(*o.half_extents) for o in self.obstacles])

    @cached_property
    def centerline_array(self) -> Optional[np.ndarray]:
        if self.reference_centerline is None:
            return None
        return np.array(self.reference_centerline, dtype=float)


# --- geometry helpers -------------------------------------------------------

def _axes_of(corners: Sequence[Point]) -> list[tuple[float, float]]:
    axes = []
    for i in range(len(corners)):
        x0, y0 = corners[i]
        x1, y1 = corners[(i + 1) % len(corners)]
        ex, ey = x1 - x0, y1 - y0
        norm = math.hypot(ex, ey)
        if norm > 0.0:
            axes.append((-ey / norm, ex / norm))
    return axes


def rectangles_overlap(a: Sequence[Point], b: Sequence[Point]) -> bool:
    """Separating-axis test for two convex quads; shared boundary counts."""
    for ax, ay in _axes_of(a) + _axes_of(b):
        pa = [px * ax + py * ay for px, py in a]
        pb = [px * ax + py * ay for px, py in b]
        if max(pa) < min(pb) or max(pb) < min(pa):
            return False
    return True


def _segment_distance(p1: Point, p2: Point, q1: Point, q2: Point) -> float:
    """Minimum distance between two segments (0 if they intersect)."""
    d1 = (p2[0] - p1[0], p2[1] - p1[1])
    d2 = (q2[0] - q1[0], q2[1] - q1[1])
    r = (p1[0] - q1[0], p1[1] - q1[1])
    a = d1[0] * d1[0] + d1[1] * d1[1]
    e = d2[0] * d2[0] + d2[1] * d2[1]
    f = d2[0] * r[0] + d2[1] * r[1]
    if a == 0.0 and e == 0.0:
        return math.hypot(*r)
    if a == 0.0:
        t = min(max(f / e, 0.0), 1.0)
        s = 0.0
    else:
        c = d1[0] * r[0] + d1[1] * r[1]
        if e == 0.0:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1[0] * d2[0] + d1[1] * d2[1]
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom != 0.0 else 0.0
            t = b * s + f
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > e:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
            else:
                t /= e
    cx = p1[0] + d1[0] * s - (q1[0] + d2[0] * t)
    cy = p1[1] + d1[1] * s - (q1[1] + d2[1] * t)
    return math.hypot(cx, cy)


def point_to_polyline_distance(pts: np.ndarray, point: Point) -> float:
    """Distance from a point to a polyline, measured against its segments."""
    p = np.asarray(point, dtype=float)
    a = pts[:-1]
    d = pts[1:] - a
    seg_len_sq = (d ** 2).sum(axis=1)
    seg_len_sq[seg_len_sq == 0.0] = 1.0
    t = np.clip(((p - a) * d).sum(axis=1) / seg_len_sq, 0.0, 1.0)
    closest = a + t[:, None] * d
    return float(np.hypot(*(closest - p).T).min())


def rectangle_distance(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Minimum distance between two convex quads; 0 when they overlap."""
    if rectangles_overlap(a, b):
        return 0.0
    best = math.inf
    for i in range(4):
        p1, p2 = a[i], a[(i + 1) % 4]
        for j in range(4):
            best = min(best, _segment_distance(p1, p2, b[j], b[(j + 1) % 4]))
    return best


# --- queries ----------------------------------------------------------------

def collides(footprint: Sequence[Point], world: WorldMap) -> list[int]:
    """Indices of obstacles overlapping the footprint rectangle."""
    if not world.obstacles:
        return []
    fp = np.asarray(footprint, dtype=float)
    fp_center = fp.mean(axis=0)
    fp_radius = float(np.hypot(*(fp - fp_center).T).max())
    center_dist = np.hypot(*(world._obstacle_centers - fp_center).T)
    candidates = np.nonzero(center_dist <= fp_radius + world._obstacle_radii)[0]
    hits = []
    fp_list = [tuple(p) for p in fp]
    for i in candidates:
        if rectangles_overlap(fp_list, world.obstacles[int(i)].corners()):
            hits.append(int(i))
    return hits


def clearance(footprint: Sequence[Point], world: WorldMap) -> float:
    """Minimum distance from the footprint to any obstacle (inf if none)."""
    if not world.obstacles:
        return math.inf
    fp = np.asarray(footprint, dtype=float)
    fp_center = fp.mean(axis=0)
    fp_radius = float(np.hypot(*(fp - fp_center).T).max())
    center_dist = np.hypot(*(world._obstacle_centers - fp_center).T)
    lower_bound = center_dist - fp_radius - world._obstacle_radii
    fp_list = [tuple(p) for p in fp]
    best = math.inf
    for i in np.argsort(lower_bound):
        if lower_bound[i] >= best:
            break
        d = rectangle_distance(fp_list, world.obstacles[int(i)].corners())
        best = min(best, d)
        if best == 0.0:
            break
    return best


def crossed_finish(prev: Point, curr: Point, world: WorldMap) -> bool:
    """True iff the motion segment crosses the finish line forward.

    Forward means the motion has a positive component along the finish
    line's left normal (the line is directed p1 -> p2; its left normal
    (-dy, dx) points in the intended travel direction).
    """
    (x1, y1), (x2, y2) = world.finish_line
    dx, dy = x2 - x1, y2 - y1
    mx, my = curr[0] - prev[0], curr[1] - prev[1]
    denom = dx * my - dy * mx
    if denom == 0.0:
        return False
    # parametric intersection: prev + t*(m) == p1 + u*(d)
    t = (dy * (prev[0] - x1) - dx * (prev[1] - y1)) / denom
    u = (my * (prev[0] - x1) - mx * (prev[1] - y1)) / denom
    if not (0.0 <= t <= 1.0 and 0.0 <= u <= 1.0):
        return False
    return mx * -dy + my * dx > 0.0


# --- serialization ----------------------------------------------------------

def _need(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise ParseError(f"missing field '{key}' in {where}")
    value = obj[key]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind):
        raise ParseError(f"field '{key}' in {where} must be {kind.__name__}")
    return value


def _pair(value, where: str) -> Point:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ParseError(f"{where} must be a pair of numbers")
    return (float(value[0]), float(value[1]))


def load_map(text: str) -> WorldMap:
    """Parse and validate a ``telepath-map/1`` JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("map document must be a JSON object")
    fmt = _need(doc, "format", str, "map")
    if fmt != MAP_FORMAT:
        raise ParseError(f"unsupported format '{fmt}' (expected '{MAP_FORMAT}')")
    name = _need(doc, "name", str, "map")
    bounds_obj = _need(doc, "bounds", dict, "map")
    bmin = _pair(_need(bounds_obj, "min", list, "bounds"), "bounds.min")
    bmax = _pair(_need(bounds_obj, "max", list, "bounds"), "bounds.max")
    sp = _need(doc, "start_pose", list, "map")
    if len(sp) != 3 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in sp):
        raise ParseError("start_pose must be [x, y, heading]")
    start_pose = (float(sp[0]), float(sp[1]), float(sp[2]))
    fl = _need(doc, "finish_line", list, "map")
    if len(fl) != 2:
        raise ParseError("finish_line must be [[x1,y1],[x2,y2]]")
    finish_line = (_pair(fl[0], "finish_line[0]"), _pair(fl[1], "finish_line[1]"))

    obstacles = []
    for i, entry in enumerate(doc.get("obstacles", [])):
        if not isinstance(entry, dict):
            raise ParseError(f"obstacles[{i}] must be an object")
        center = _pair(_need(entry, "center", list, f"obstacles[{i}]"), f"obstacles[{i}].center")
        half = _pair(_need(entry, "half_extents", list, f"obstacles[{i}]"),
                     f"obstacles[{i}].half_extents")
        rot = float(_need(entry, "rotation_rad", float, f"obstacles[{i}]"))
        obstacles.append(Obstacle(center=center, half_extents=half, rotation=rot))

    centerline = None
    if doc.get("reference_centerline") is not None:
        raw = doc["reference_centerline"]
        if not isinstance(raw, list) or len(raw) < 2:
            raise ParseError("reference_centerline must be a list of at least 2 points")
        centerline = tuple(_pair(p, f"reference_centerline[{i}]") for i, p in enumerate(raw))

    world = WorldMap(name=name, bounds=(bmin, bmax), start_pose=start_pose,
                     finish_line=finish_line, obstacles=tuple(obstacles),
                     reference_centerline=centerline)
    _validate(world)
    return world


def _validate(world: WorldMap) -> None:
    (xmin, ymin), (xmax, ymax) = world.bounds
    if not (xmin < xmax and ymin < ymax):
        raise ValidationError("bounds: min corner must be strictly below max corner")

    def inside(p, what):
        if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
            raise ValidationError(f"{what} ({p[0]}, {p[1]}) lies outside bounds")

    inside(world.start_pose[:2], "start_pose")
    inside(world.finish_line[0], "finish_line[0]")
    inside(world.finish_line[1], "finish_line[1]")
    for i, obs in enumerate(world.obstacles):
        if not (obs.half_extents[0] > 0 and obs.half_extents[1] > 0):
            raise ValidationError(f"obstacles[{i}].half_extents must be strictly positive")
    if world.reference_centerline is not None:
        cx, cy = world.reference_centerline[0]
        sx, sy, _ = world.start_pose
        if math.hypot(cx - sx, cy - sy) > 0.5:
            raise ValidationError(
                "reference_centerline must start within 0.5 m of start_pose")


def save_map(world: WorldMap) -> str:
    """Serialize a WorldMap; load_map(save_map(m)) reproduces m exactly."""
    doc: dict = {
        "format": MAP_FORMAT,
        "name": world.name,
        "bounds": {"min": list(world.bounds[0]), "max": list(world.bounds[1])},
        "start_pose": list(world.start_pose),
        "finish_line": [list(world.finish_line[0]), list(world.finish_line[1])],
        "obstacles": [
            {"center": list(o.center), "half_extents": list(o.half_extents),
             "rotation_rad": o.rotation}
            for o in world.obstacles
        ],
    }
    if world.reference_centerline is not None:
        doc["reference_centerline"] = [list(p) for p in world.reference_centerline]
    return json.dumps(doc, indent=2, sort_keys=True)
