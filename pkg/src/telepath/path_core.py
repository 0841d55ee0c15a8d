"""Waypoint paths: interpolation, resampling, curvature, feasibility, edits.

An operator clicks an ordered list of waypoints; this module turns them into
a smooth interpolating curve resampled at a uniform arc-length step, carrying
heading and signed curvature per sample (positive = left turn). Everything
downstream (tracking, corridor rendering, metrics) works on the samples.

Splines are immutable snapshots: every edit rebuilds the interpolation over
the full waypoint list and returns a new value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline

from .vehicle import VehicleParams

# Uniform arc-length sampling step, meters (1 cm at 1:10 scale).
DS_SAMPLE = 0.01
# Minimum spacing between consecutive waypoints; closer points make the
# interpolation ill-conditioned.
MIN_SPACING = 0.05

# Interpolation order: quintic where enough points exist, degrading to a
# straight segment for two. Cubic interpolation carries an irreducible
# ~5% curvature error at 45-degree chord spacing, which is outside the
# fidelity the feasibility display needs.
_MAX_ORDER = 5


class TooFewWaypoints(ValueError):
    """A drivable path needs at least two waypoints."""


class DegenerateInput(ValueError):
    """Waypoints are non-finite, duplicated, or closer than MIN_SPACING."""


class PathFrozen(RuntimeError):
    """Path length edits are rejected while the vehicle is moving."""


class IndexOutOfRange(IndexError):
    """Waypoint index outside the current list."""


class PassedWaypointImmutable(RuntimeError):
    """Waypoints at or behind the vehicle's path projection cannot move."""


class Waypoint(NamedTuple):
    x: float
    y: float


class PathSample(NamedTuple):
    s: float
    x: float
    y: float
    heading: float
    curvature: float


@dataclass(frozen=True)
class FeasibilitySegment:
    s_start: float
    s_end: float
    feasible: bool


@dataclass(frozen=True)
class FeasibilityReport:
    kappa_max: float
    segments: tuple[FeasibilitySegment, ...]

    @property
    def all_feasible(self) -> bool:
        return all(seg.feasible for seg in self.segments)


@dataclass(frozen=True)
class OffsetBoundaries:
    """Width-corridor polylines, each shape (n, 2).

    ``self_intersecting_s`` lists the sample arc lengths where the turn
    radius drops below half the corridor width, i.e. where the inner
    boundary folds over itself. Reported, not fatal.
    """

    left: np.ndarray
    right: np.ndarray
    self_intersecting_s: np.ndarray


@dataclass(frozen=True)
class PathSpline:
    """Sampled interpolating curve through an ordered waypoint list.

    Samples are strictly increasing in arc length ``s`` with spacing at most
    ``ds``; the final sample always sits at ``total_length``.
    """

    waypoints: tuple[Waypoint, ...]
    s: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    heading: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)
    total_length: float
    ds: float

    def __len__(self) -> int:
        return len(self.s)

    def sample(self, i: int) -> PathSample:
        return PathSample(float(self.s[i]), float(self.x[i]), float(self.y[i]),
                          float(self.heading[i]), float(self.curvature[i]))

    def point_at(self, s_query: float) -> tuple[float, float]:
        """Centerline position at arc length s (clamped to the path)."""
        s_query = min(max(s_query, 0.0), self.total_length)
        return (float(np.interp(s_query, self.s, self.x)),
                float(np.interp(s_query, self.s, self.y)))


def _validate_waypoints(waypoints: Sequence[tuple[float, float]]) -> list[Waypoint]:
    pts = [Waypoint(float(p[0]), float(p[1])) for p in waypoints]
    if len(pts) < 2:
        raise TooFewWaypoints(f"need at least 2 waypoints, got {len(pts)}")
    for i, p in enumerate(pts):
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise DegenerateInput(f"waypoint {i} has non-finite coordinates: {p}")
    for i in range(1, len(pts)):
        gap = math.hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y)
        if gap < MIN_SPACING:
            raise DegenerateInput(
                f"waypoints {i - 1} and {i} are {gap:.4f} m apart (min {MIN_SPACING} m)")
    return pts


def build_spline(waypoints: Sequence[tuple[float, float]], ds: float = DS_SAMPLE) -> PathSpline:
    """Interpolate waypoints and resample at a uniform arc-length step.

    Uses centripetal (alpha = 0.5) chord-length parameterization and B-spline
    interpolation of order min(5, n - 1). Curvature comes analytically from
    the parametric derivatives: kappa = (x'y'' - y'x'') / (x'^2 + y'^2)^1.5.
    """
    pts = _validate_waypoints(waypoints)
    xy = np.array(pts, dtype=float)

    chords = np.hypot(*np.diff(xy, axis=0).T)
    t_knots = np.concatenate([[0.0], np.cumsum(np.sqrt(chords))])
    order = min(_MAX_ORDER, len(pts) - 1)
    spline = make_interp_spline(t_knots, xy, k=order, axis=0)

    # Dense evaluation for the arc-length table; chord summation at ds/4
    # spacing keeps the length error far below the sample step.
    chord_total = float(chords.sum())
    n_dense = max(int(chord_total / (ds / 4.0)), 32 * len(pts), 64)
    t_dense = np.linspace(t_knots[0], t_knots[-1], n_dense + 1)
    dense = spline(t_dense)
    seg = np.hypot(*np.diff(dense, axis=0).T)
    s_dense = np.concatenate([[0.0], np.cumsum(seg)])
    total_length = float(s_dense[-1])

    s_grid = np.arange(0.0, total_length, ds)
    if total_length - s_grid[-1] < 1e-12:
        s_grid[-1] = total_length
    else:
        s_grid = np.append(s_grid, total_length)
    t_grid = np.interp(s_grid, s_dense, t_dense)

    pos = spline(t_grid)
    d1 = spline.derivative(1)(t_grid)
    if order >= 2:
        d2 = spline.derivative(2)(t_grid)
    else:
        d2 = np.zeros_like(d1)
    speed_sq = d1[:, 0] ** 2 + d1[:, 1] ** 2
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        curvature = np.where(speed_sq > 0.0, cross / np.power(speed_sq, 1.5), 0.0)
    heading = np.arctan2(d1[:, 1], d1[:, 0])

    return PathSpline(
        waypoints=tuple(pts),
        s=s_grid,
        x=pos[:, 0],
        y=pos[:, 1],
        heading=heading,
        curvature=curvature,
        total_length=total_length,
        ds=ds,
    )


def project(spline: PathSpline, point: tuple[float, float]) -> tuple[float, float]:
    """Arc length and signed lateral offset of the closest sample.

    Ties resolve to the smallest arc length. The offset sign follows the
    sample's left normal: positive means the point lies left of the path.
    """
    px, py = float(point[0]), float(point[1])
    d_sq = (spline.x - px) ** 2 + (spline.y - py) ** 2
    i = int(np.argmin(d_sq))
    nx, ny = -math.sin(spline.heading[i]), math.cos(spline.heading[i])
    lateral = (px - spline.x[i]) * nx + (py - spline.y[i]) * ny
    return float(spline.s[i]), float(lateral)


def check_feasibility(spline: PathSpline, params: VehicleParams) -> FeasibilityReport:
    """Partition the path into segments drivable within the steering limit.

    A sample is infeasible when |curvature| exceeds tan(max_steering) /
    wheelbase; contiguous same-flag runs merge into segments whose
    boundaries sit midway between the neighboring samples, so the segments
    tile [0, total_length] exactly.
    """
    kappa_max = params.kappa_max
    flags = np.abs(spline.curvature) <= kappa_max
    segments: list[FeasibilitySegment] = []
    run_start = 0.0
    run_flag = bool(flags[0])
    for i in range(1, len(flags)):
        if bool(flags[i]) != run_flag:
            boundary = float(spline.s[i - 1] + spline.s[i]) / 2.0
            segments.append(FeasibilitySegment(run_start, boundary, run_flag))
            run_start = boundary
            run_flag = bool(flags[i])
    segments.append(FeasibilitySegment(run_start, spline.total_length, run_flag))
    return FeasibilityReport(kappa_max=kappa_max, segments=tuple(segments))


def offset_boundaries(spline: PathSpline, width: float) -> OffsetBoundaries:
    """Displace every sample by +-width/2 along its normal (corridor lines)."""
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    nx, ny = -np.sin(spline.heading), np.cos(spline.heading)
    half = width / 2.0
    left = np.stack([spline.x + half * nx, spline.y + half * ny], axis=1)
    right = np.stack([spline.x - half * nx, spline.y - half * ny], axis=1)
    tight = np.abs(spline.curvature) > (1.0 / half)
    return OffsetBoundaries(left=left, right=right,
                            self_intersecting_s=spline.s[tight].copy())


def append_waypoint(spline: PathSpline, p: tuple[float, float], frozen: bool = False) -> PathSpline:
    """Rebuild the spline with one more waypoint at the end.

    The whole curve is reinterpolated; with order-5 interpolation the change
    is not strictly local, so earlier samples may shift within the spline's
    support near the end.
    """
    if frozen:
        raise PathFrozen("path edits are frozen while the vehicle is moving")
    return build_spline(list(spline.waypoints) + [Waypoint(float(p[0]), float(p[1]))], ds=spline.ds)


def move_waypoint(spline: PathSpline, index: int, p: tuple[float, float],
                  vehicle_s: Optional[float] = None) -> PathSpline:
    """Rebuild with waypoint ``index`` relocated to ``p``.

    While driving (``vehicle_s`` given), waypoints at or behind the vehicle's
    projection are immutable.
    """
    if not 0 <= index < len(spline.waypoints):
        raise IndexOutOfRange(f"waypoint index {index} out of range 0..{len(spline.waypoints) - 1}")
    if vehicle_s is not None:
        wp = spline.waypoints[index]
        wp_s, _ = project(spline, (wp.x, wp.y))
        if wp_s <= vehicle_s:
            raise PassedWaypointImmutable(
                f"waypoint {index} at s={wp_s:.2f} is behind the vehicle (s={vehicle_s:.2f})")
    pts = list(spline.waypoints)
    pts[index] = Waypoint(float(p[0]), float(p[1]))
    return build_spline(pts, ds=spline.ds)


def delete_last_waypoint(spline: PathSpline, frozen: bool = False) -> Optional[PathSpline]:
    """Drop the final waypoint; returns None when fewer than two remain."""
    if frozen:
        raise PathFrozen("path edits are frozen while the vehicle is moving")
    pts = list(spline.waypoints[:-1])
    if len(pts) < 2:
        return None
    return build_spline(pts, ds=spline.ds)
