"""Sequential-mode path tracking and direct-mode command mapping.

Sequential mode: the vehicle follows the committed path with pure pursuit
while the operator only steps a speed setpoint up and down. Direct mode maps
normalized steering plus pedal state onto actuator commands.

``simulate_tracking`` and the live session share ``sequential_control`` and
the vehicle step, so the predicted route equals the executed one whenever the
link is ideal and the setpoint does not change mid-drive.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from . import path_core
from .path_core import PathSpline
from .vehicle import ControlInput, VehicleParams, VehicleState, step, wrap_angle

LOOKAHEAD = 0.6          # m, pure pursuit goal distance along the path
STEP_DV = 0.05           # m/s per accelerate/decelerate event
END_MARGIN = 0.01        # m, added to the stopping-distance rule at path end
T_MAX = 600.0            # s, horizon for tracking prediction
TICK_DT = 0.01           # s, nominal control/simulation step

# Windowed projection keeps progress monotone on self-overlapping paths
# (a lap whose tail re-traces its start would otherwise snap s back to 0).
_BACK_WINDOW = 0.5
_FORWARD_WINDOW = 3.0


class EmptyPath(ValueError):
    """Sequential control was requested with no committed path."""


class Mode(str, enum.Enum):
    SEQUENTIAL_IDLE = "sequential_idle"
    SEQUENTIAL_DRIVING = "sequential_driving"
    DIRECT = "direct"
    SAFETY_STOPPING = "safety_stopping"


class VelocityEvent(str, enum.Enum):
    ACCELERATE = "accelerate"
    DECELERATE = "decelerate"
    STOP = "stop"


class Pedal(str, enum.Enum):
    ACCEL = "accel"
    BRAKE = "brake"
    NONE = "none"


@dataclass(frozen=True)
class SpeedSetpoint:
    target_v: float = 0.0
    step_dv: float = STEP_DV


@dataclass(frozen=True)
class TrackingState:
    s_progress: float = 0.0
    lookahead: float = LOOKAHEAD
    mode: Mode = Mode.SEQUENTIAL_IDLE


@dataclass(frozen=True)
class TrackingPrediction:
    """Forward-simulated route (the red path) at one pose per tick."""

    states: tuple[VehicleState, ...]
    times: tuple[float, ...]
    horizon_exceeded: bool


def update_setpoint(sp: SpeedSetpoint, event: VelocityEvent, params: VehicleParams) -> SpeedSetpoint:
    """Step the target speed by one increment, clamped to [0, v_max]."""
    if event is VelocityEvent.ACCELERATE:
        target = sp.target_v + sp.step_dv
    elif event is VelocityEvent.DECELERATE:
        target = sp.target_v - sp.step_dv
    else:
        target = 0.0
    return replace(sp, target_v=min(max(target, 0.0), params.v_max))


def progress_on_path(spline: PathSpline, point: tuple[float, float], last_s: float) -> float:
    """Monotone arc-length progress: nearest sample inside a forward window."""
    lo = np.searchsorted(spline.s, last_s - _BACK_WINDOW)
    hi = np.searchsorted(spline.s, last_s + _FORWARD_WINDOW, side="right")
    xs, ys = spline.x[lo:hi], spline.y[lo:hi]
    d_sq = (xs - point[0]) ** 2 + (ys - point[1]) ** 2
    s_found = float(spline.s[lo + int(np.argmin(d_sq))])
    return max(last_s, s_found)


def _goal_point(spline: PathSpline, s_goal: float) -> tuple[float, float]:
    i = min(int(np.searchsorted(spline.s, s_goal)), len(spline.s) - 1)
    return float(spline.x[i]), float(spline.y[i])


def _pursuit_steering(state: VehicleState, spline: PathSpline, s_proj: float,
                      lookahead: float, params: VehicleParams) -> float:
    gx, gy = _goal_point(spline, min(s_proj + lookahead, spline.total_length))
    alpha = wrap_angle(math.atan2(gy - state.y, gx - state.x) - state.heading)
    steering = math.atan(2.0 * params.wheelbase * math.sin(alpha) / lookahead)
    return min(max(steering, -params.max_steering), params.max_steering)


def pure_pursuit_steering(state: VehicleState, spline: PathSpline | None,
                          lookahead: float, params: VehicleParams) -> float:
    """Steering command toward the path point ``lookahead`` meters ahead.

    The goal sits at the vehicle's path projection plus the lookahead,
    clamped to the path end; steering = atan(2 * wheelbase * sin(alpha) /
    lookahead) where alpha is the goal bearing relative to the heading.
    """
    if spline is None:
        raise EmptyPath("no path to track")
    s_proj, _ = path_core.project(spline, (state.x, state.y))
    return _pursuit_steering(state, spline, s_proj, lookahead, params)


def longitudinal_accel(state: VehicleState, sp: SpeedSetpoint, remaining: float,
                       params: VehicleParams) -> float:
    """Track the setpoint, overridden by end-of-path braking.

    Braking engages once the remaining path is within the stopping distance
    v^2 / (2 * decel) plus a small margin, forcing the vehicle to rest at the
    path end regardless of the setpoint.
    """
    if remaining <= state.v * state.v / (2.0 * params.decel) + END_MARGIN:
        return -params.decel if state.v > 0.0 else 0.0
    if state.v < sp.target_v:
        return params.accel
    if state.v > sp.target_v:
        return -params.decel
    return 0.0


def sequential_control(state: VehicleState, spline: PathSpline | None, sp: SpeedSetpoint,
                       params: VehicleParams, lookahead: float,
                       last_s: float) -> tuple[ControlInput, float]:
    """One control tick of sequential mode: (command, new path progress)."""
    if spline is None:
        raise EmptyPath("no path to track")
    s_proj = progress_on_path(spline, (state.x, state.y), last_s)
    steering = _pursuit_steering(state, spline, s_proj, lookahead, params)
    accel = longitudinal_accel(state, sp, spline.total_length - s_proj, params)
    return ControlInput(steering_target=steering, accel_cmd=accel), s_proj


def simulate_tracking(spline: PathSpline | None, start: VehicleState, sp: SpeedSetpoint,
                      params: VehicleParams, dt: float = TICK_DT,
                      lookahead: float = LOOKAHEAD, t_max: float = T_MAX) -> TrackingPrediction:
    """Forward-simulate the tracked drive until standstill at the path end.

    Returns one pose per step including the start. ``horizon_exceeded`` is
    set when the vehicle has not come to rest at the path end within
    ``t_max`` (e.g. a zero setpoint away from the end).
    """
    if spline is None:
        raise EmptyPath("no path to simulate")
    states = [start]
    times = [0.0]
    state = start
    s_prog = progress_on_path(spline, (start.x, start.y), 0.0)
    n_steps = int(round(t_max / dt))
    done = False
    for k in range(1, n_steps + 1):
        control, s_prog = sequential_control(state, spline, sp, params, lookahead, s_prog)
        state = step(state, control, params, dt)
        states.append(state)
        times.append(k * dt)
        if state.v == 0.0 and spline.total_length - s_prog <= 0.05:
            done = True
            break
    return TrackingPrediction(states=tuple(states), times=tuple(times),
                              horizon_exceeded=not done)


def direct_command(steer_input: float, pedal: Pedal, params: VehicleParams) -> ControlInput:
    """Map a normalized steering input in [-1, 1] and pedal state to actuators."""
    steer = min(max(steer_input, -1.0), 1.0) * params.max_steering
    if pedal is Pedal.ACCEL:
        accel = params.accel
    elif pedal is Pedal.BRAKE:
        accel = -params.decel
    else:
        accel = 0.0
    return ControlInput(steering_target=steer, accel_cmd=accel)
