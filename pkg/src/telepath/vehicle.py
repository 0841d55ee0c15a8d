"""Kinematic single-track (bicycle) vehicle model.

State lives at the rear-axle midpoint; the footprint rectangle extends
``length`` forward from it. Integration is explicit Euler at a fixed,
caller-supplied step, which keeps the model deterministic and cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Steering actuator slew limit, rad/s. Finite so direct-mode steering
# cannot teleport between frames.
STEER_RATE = 4.0


class NonFiniteState(ValueError):
    """A NaN or infinity appeared in a state or command."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass(frozen=True)
class VehicleParams:
    """Physical limits of the teleoperated vehicle.

    Defaults are F1Tenth-like at 1:10 scale. Only ``v_max`` (0.35 m/s)
    is a study-dictated value; the rest are declared defaults and may be
    overridden from the scenario file.
    """

    wheelbase: float = 0.32
    max_steering: float = 0.40
    width: float = 0.20
    length: float = 0.50
    v_max: float = 0.35
    accel: float = 0.5
    decel: float = 1.0

    def __post_init__(self) -> None:
        for name in ("wheelbase", "max_steering", "width", "length", "v_max", "accel", "decel"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"VehicleParams.{name} must be strictly positive, got {value!r}")
        if self.max_steering >= math.pi / 2:
            raise ValueError("max_steering must be below pi/2")

    @property
    def kappa_max(self) -> float:
        """Largest path curvature the steering geometry can follow."""
        return math.tan(self.max_steering) / self.wheelbase


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v: float = 0.0
    steering: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class ControlInput:
    steering_target: float = 0.0
    accel_cmd: float = 0.0


def step(state: VehicleState, control: ControlInput, params: VehicleParams, dt: float) -> VehicleState:
    """Advance the kinematic bicycle model by one Euler step.

    Steering slews toward ``steering_target`` at ``STEER_RATE`` and is applied
    for the whole interval; position uses the start-of-interval speed and
    heading. Speed and steering are re-clamped to the params limits, heading
    is wrapped to (-pi, pi].
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    values = (state.x, state.y, state.heading, state.v, state.steering,
              control.steering_target, control.accel_cmd)
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteState(f"non-finite state or control: {values}")

    target = _clamp(control.steering_target, -params.max_steering, params.max_steering)
    max_slew = STEER_RATE * dt
    steering = state.steering + _clamp(target - state.steering, -max_slew, max_slew)
    steering = _clamp(steering, -params.max_steering, params.max_steering)

    accel = _clamp(control.accel_cmd, -params.decel, params.accel)

    x = state.x + state.v * math.cos(state.heading) * dt
    y = state.y + state.v * math.sin(state.heading) * dt
    heading = wrap_angle(state.heading + state.v * math.tan(steering) / params.wheelbase * dt)
    v = _clamp(state.v + accel * dt, 0.0, params.v_max)

    return VehicleState(x=x, y=y, heading=heading, v=v, steering=steering)


def footprint(state: VehicleState, params: VehicleParams) -> list[tuple[float, float]]:
    """Oriented footprint rectangle, counterclockwise from the rear-right corner.

    The rectangle spans [0, length] ahead of the rear axle and
    [-width/2, +width/2] across it, rotated by the vehicle heading.
    """
    c, s = math.cos(state.heading), math.sin(state.heading)
    hw = params.width / 2.0
    corners_local = ((0.0, -hw), (params.length, -hw), (params.length, hw), (0.0, hw))
    return [(state.x + c * lx - s * ly, state.y + s * lx + c * ly) for lx, ly in corners_local]


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value
