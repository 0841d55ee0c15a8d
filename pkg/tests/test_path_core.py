import math

import numpy as np
import pytest

from telepath import path_core
from telepath.path_core import (
    DS_SAMPLE,
    DegenerateInput,
    IndexOutOfRange,
    PassedWaypointImmutable,
    PathFrozen,
    TooFewWaypoints,
    Waypoint,
    append_waypoint,
    build_spline,
    check_feasibility,
    delete_last_waypoint,
    move_waypoint,
    offset_boundaries,
    project,
)
from telepath.vehicle import VehicleParams

from conftest import circle_waypoints, random_waypoint_walk


def fd_curvature(spline):
    """Independent oracle: central-difference curvature of the sample polyline."""
    xp = np.gradient(spline.x, spline.s)
    yp = np.gradient(spline.y, spline.s)
    xpp = np.gradient(xp, spline.s)
    ypp = np.gradient(yp, spline.s)
    return (xp * ypp - yp * xpp) / (xp**2 + yp**2) ** 1.5


# --- build_spline -----------------------------------------------------------

def test_two_point_straight_line():
    sp = build_spline([(0, 0), (10, 0)])
    assert sp.total_length == pytest.approx(10.0, abs=1e-9)
    assert np.abs(sp.curvature).max() < 1e-12
    assert np.abs(sp.y).max() < 1e-12
    assert sp.s[0] == 0.0 and sp.s[-1] == pytest.approx(10.0, abs=1e-9)


def test_circle_curvature_within_5pct():
    sp = build_spline(circle_waypoints(8, 5.0))
    interior = (sp.s > 0.15 * sp.total_length) & (sp.s < 0.85 * sp.total_length)
    kappa = np.abs(sp.curvature[interior])
    assert np.abs(kappa - 0.2).max() < 0.05 * 0.2


def test_too_few_waypoints():
    with pytest.raises(TooFewWaypoints):
        build_spline([(0, 0)])


def test_degenerate_waypoints():
    with pytest.raises(DegenerateInput):
        build_spline([(0, 0), (0.02, 0)])          # below MIN_SPACING
    with pytest.raises(DegenerateInput):
        build_spline([(0, 0), (1, 0), (1, 0)])     # duplicate
    with pytest.raises(DegenerateInput):
        build_spline([(0, 0), (math.nan, 1)])


def test_samples_strictly_increasing_and_bounded():
    rng = np.random.default_rng(7)
    for _ in range(10):
        pts = random_waypoint_walk(rng, int(rng.integers(2, 10)))
        sp = build_spline(pts)
        gaps = np.diff(sp.s)
        assert (gaps > 0).all()
        assert gaps.max() <= DS_SAMPLE + 1e-12
        assert sp.total_length >= math.dist(pts[0], pts[-1]) - 1e-9


def test_interpolation_passes_through_waypoints():
    rng = np.random.default_rng(21)
    for _ in range(10):
        pts = random_waypoint_walk(rng, int(rng.integers(2, 12)))
        sp = build_spline(pts)
        for wx, wy in pts:
            d = np.hypot(sp.x - wx, sp.y - wy).min()
            assert d <= DS_SAMPLE


def test_curvature_consistent_with_central_differences():
    # 2% agreement with the polyline finite-difference oracle for |k| <= 2.
    # The 2% is taken against the local curvature scale (window of 5), which
    # keeps the relative comparison meaningful across zero crossings, with a
    # small absolute floor on straights.
    for pts in (circle_waypoints(8, 5.0), random_waypoint_walk(np.random.default_rng(3), 9)):
        sp = build_spline(pts)
        kappa_fd = fd_curvature(sp)
        mask = np.abs(sp.curvature) <= 2.0
        # one-sided gradient stencils pollute the oracle two samples deep
        mask[[0, 1, -2, -1]] = False
        abs_k = np.abs(sp.curvature)
        local = np.max(np.stack([np.roll(abs_k, i) for i in range(-2, 3)]), axis=0)
        diff = np.abs(kappa_fd[mask] - sp.curvature[mask])
        tol = np.maximum(0.02 * local[mask], 2e-4)
        assert (diff <= tol).all()


def test_rigid_motion_equivariance():
    pts = random_waypoint_walk(np.random.default_rng(11), 7)
    sp = build_spline(pts)
    theta, tx, ty = 0.7, 3.0, -2.0
    c, s = math.cos(theta), math.sin(theta)
    moved = [(c * x - s * y + tx, s * x + c * y + ty) for x, y in pts]
    sp2 = build_spline(moved)
    assert np.allclose(sp2.x, c * sp.x - s * sp.y + tx, atol=1e-9)
    assert np.allclose(sp2.y, s * sp.x + c * sp.y + ty, atol=1e-9)
    assert np.allclose(sp2.curvature, sp.curvature, atol=1e-9)
    rep1 = check_feasibility(sp, VehicleParams())
    rep2 = check_feasibility(sp2, VehicleParams())
    assert len(rep1.segments) == len(rep2.segments)
    for a, b in zip(rep1.segments, rep2.segments):
        assert a.feasible == b.feasible
        assert a.s_start == pytest.approx(b.s_start, abs=1e-9)
        assert a.s_end == pytest.approx(b.s_end, abs=1e-9)


# --- feasibility ------------------------------------------------------------

def test_straight_path_single_feasible_segment(params):
    sp = build_spline([(0, 0), (10, 0)])
    rep = check_feasibility(sp, params)
    assert len(rep.segments) == 1
    seg = rep.segments[0]
    assert (seg.s_start, seg.s_end, seg.feasible) == (0.0, sp.total_length, True)


def test_circle_feasible_at_generous_limit():
    sp = build_spline(circle_waypoints(8, 5.0))
    p = VehicleParams(wheelbase=0.5, max_steering=math.pi / 4)
    rep = check_feasibility(sp, p)
    assert rep.kappa_max == pytest.approx(2.0, abs=1e-12)
    assert rep.all_feasible


def test_hairpin_has_infeasible_segment():
    sp = build_spline([(0, 0), (1, 0), (1, 0.2), (0, 0.2)])
    p = VehicleParams(wheelbase=0.32, max_steering=math.radians(25))
    # oracle: the sampled curvature itself exceeds tan(25 deg)/0.32
    assert np.abs(sp.curvature).max() > math.tan(math.radians(25)) / 0.32
    rep = check_feasibility(sp, p)
    assert any(not seg.feasible for seg in rep.segments)
    assert not rep.all_feasible


def test_segments_partition_path(params):
    rng = np.random.default_rng(5)
    for _ in range(25):
        sp = build_spline(random_waypoint_walk(rng, int(rng.integers(3, 10))))
        rep = check_feasibility(sp, params)
        assert rep.segments[0].s_start == 0.0
        assert rep.segments[-1].s_end == sp.total_length
        for prev, cur in zip(rep.segments, rep.segments[1:]):
            assert prev.s_end == cur.s_start
            assert prev.feasible != cur.feasible


def test_generous_kappa_max_collapses_to_one_segment():
    sp = build_spline([(0, 0), (1, 0), (1, 0.2), (0, 0.2)])
    peak = np.abs(sp.curvature).max()
    wheelbase = 0.32
    p = VehicleParams(wheelbase=wheelbase,
                      max_steering=min(math.atan(1.1 * peak * wheelbase), 1.5))
    rep = check_feasibility(sp, p)
    assert len(rep.segments) == 1 and rep.segments[0].feasible


# --- corridor boundaries ----------------------------------------------------

def test_straight_boundaries():
    sp = build_spline([(0, 0), (10, 0)])
    b = offset_boundaries(sp, 0.3)
    assert np.allclose(b.left[:, 1], 0.15, atol=1e-12)
    assert np.allclose(b.right[:, 1], -0.15, atol=1e-12)
    assert b.self_intersecting_s.size == 0


def test_circle_boundaries_are_offset_circles():
    # CCW circle: left normal points toward the center
    sp = build_spline(circle_waypoints(8, 5.0))
    b = offset_boundaries(sp, 0.3)
    interior = (sp.s > 0.15 * sp.total_length) & (sp.s < 0.85 * sp.total_length)
    r_left = np.hypot(b.left[interior, 0], b.left[interior, 1])
    r_right = np.hypot(b.right[interior, 0], b.right[interior, 1])
    assert np.abs(r_left - 4.85).max() < 0.02
    assert np.abs(r_right - 5.15).max() < 0.02


def test_tight_turn_flags_self_intersection():
    sp = build_spline(circle_waypoints(8, 0.125))   # kappa = 8
    assert np.abs(sp.curvature).max() > 8.0 * 0.95
    b = offset_boundaries(sp, 0.3)                  # 1/8 < 0.15
    assert b.self_intersecting_s.size > 0


# --- projection -------------------------------------------------------------

def test_project_straight_path():
    sp = build_spline([(0, 0), (10, 0)])
    s, lat = project(sp, (5.0, 0.2))
    assert s == pytest.approx(5.0, abs=1e-9)
    assert lat == pytest.approx(0.2, abs=1e-9)


def test_project_on_sample_zero_offset():
    sp = build_spline([(0, 0), (10, 0)])
    s, lat = project(sp, (float(sp.x[137]), float(sp.y[137])))
    assert lat == pytest.approx(0.0, abs=1e-12)
    assert s == pytest.approx(float(sp.s[137]), abs=1e-12)


def test_project_tie_breaks_to_smallest_s():
    sp = build_spline([(0, 0), (10, 0)])
    s, _ = project(sp, (5.005, 3.0))   # equidistant between s=5.00 and s=5.01
    assert s == pytest.approx(5.0, abs=1e-9)


# --- edits ------------------------------------------------------------------

def test_append_collinear_grows_by_chord():
    sp = build_spline([(0, 0), (2, 0)])
    sp2 = append_waypoint(sp, (5, 0))
    assert sp2.total_length == pytest.approx(sp.total_length + 3.0, abs=1e-6)
    assert len(sp2.waypoints) == 3


def test_append_coincident_rejected():
    sp = build_spline([(0, 0), (2, 0)])
    with pytest.raises(DegenerateInput):
        append_waypoint(sp, (2, 0))


def test_append_frozen_rejected():
    sp = build_spline([(0, 0), (2, 0)])
    with pytest.raises(PathFrozen):
        append_waypoint(sp, (4, 0), frozen=True)


def test_move_middle_point():
    sp = build_spline([(0, 0), (5, 0), (10, 0)])
    sp2 = move_waypoint(sp, 1, (5, 1))
    assert len(sp2.waypoints) == 3
    assert np.hypot(sp2.x - 5, sp2.y - 1).min() <= DS_SAMPLE


def test_move_index_out_of_range():
    sp = build_spline([(0, 0), (5, 0), (10, 0)])
    with pytest.raises(IndexOutOfRange):
        move_waypoint(sp, 3, (1, 1))


def test_move_passed_waypoint_rejected():
    sp = build_spline([(0, 0), (5, 0), (10, 0)])
    with pytest.raises(PassedWaypointImmutable):
        move_waypoint(sp, 1, (5, 1), vehicle_s=7.0)
    # ahead of the vehicle it is still editable
    sp2 = move_waypoint(sp, 1, (5, 1), vehicle_s=2.0)
    assert sp2.waypoints[1] == Waypoint(5.0, 1.0)


def test_delete_last():
    sp = build_spline([(0, 0), (5, 0), (10, 0)])
    sp2 = delete_last_waypoint(sp)
    assert sp2 is not None and len(sp2.waypoints) == 2
    assert delete_last_waypoint(sp2) is None
    with pytest.raises(PathFrozen):
        delete_last_waypoint(sp, frozen=True)


def test_append_then_delete_restores_samples():
    sp = build_spline([(0, 0), (3, 1), (6, 0)])
    sp2 = delete_last_waypoint(append_waypoint(sp, (9, 2)))
    assert np.allclose(sp2.x, sp.x, atol=1e-9)
    assert np.allclose(sp2.y, sp.y, atol=1e-9)
    assert np.allclose(sp2.s, sp.s, atol=1e-9)
