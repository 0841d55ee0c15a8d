"""Scripted operators that stand in for the human driver.

BotSequential reproduces the sequential-input procedure: commit the whole
lap as waypoints up front, wait for the acknowledgement, then step the speed
setpoint up to the limit and let the vehicle track. BotDirect closes the
loop through the link instead, steering toward a lookahead point on the
reference centerline from the latest (delayed) telemetry with the throttle
held, the way a steering-wheel operator cuts curves.

Both accept a ``silence_at_progress`` option: once telemetry reports that
much path progress they fall silent forever, which is how the disconnect
safety scenarios cut the heartbeats mid-drive.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .link import Message
from .vehicle import VehicleParams
from .world import WorldMap

Send = Callable[[str, dict], None]

WP_SPACING = 1.0            # m between scripted waypoints along the centerline
PATHSET_RETRY = 1.0         # s to wait for an Ack before resending
KEY_CADENCE = 0.25          # s between simulated accelerate key presses
DIRECT_LOOKAHEAD = 1.2      # m; larger than the tracking controller's, so the
                            # direct bot visibly cuts curves like a human driver


class MissingCenterline(ValueError):
    """The scripted operators need a reference centerline in the map."""


def _centerline_table(world: WorldMap) -> tuple[np.ndarray, np.ndarray]:
    if world.reference_centerline is None:
        raise MissingCenterline(f"map '{world.name}' has no reference_centerline")
    pts = world.centerline_array
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return pts, s


def centerline_waypoints(world: WorldMap, spacing: float = WP_SPACING) -> list[tuple[float, float]]:
    """Waypoints every ``spacing`` meters along the reference centerline."""
    pts, s = _centerline_table(world)
    total = float(s[-1])
    stations = np.arange(0.0, total, spacing)
    if total - stations[-1] > 1e-9:
        stations = np.append(stations, total)
    else:
        stations[-1] = total
    xs = np.interp(stations, s, pts[:, 0])
    ys = np.interp(stations, s, pts[:, 1])
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def polyline_pursuit(pose: tuple[float, float, float], pts: np.ndarray, s: np.ndarray,
                     last_s: float, lookahead: float, params: VehicleParams) -> tuple[float, float]:
    """Pure pursuit against a polyline: (steering, new progress).

    Projection is windowed ahead of the previous progress so a lap whose
    tail overlaps its start cannot pull the goal backwards.
    """
    x, y, heading = pose
    lo = int(np.searchsorted(s, last_s - 0.5))
    hi = int(np.searchsorted(s, last_s + 3.0, side="right"))
    d_sq = (pts[lo:hi, 0] - x) ** 2 + (pts[lo:hi, 1] - y) ** 2
    s_proj = max(last_s, float(s[lo + int(np.argmin(d_sq))]))
    goal_i = min(int(np.searchsorted(s, s_proj + lookahead)), len(s) - 1)
    gx, gy = pts[goal_i]
    alpha = math.atan2(gy - y, gx - x) - heading
    alpha = (alpha + math.pi) % (2.0 * math.pi) - math.pi
    steering = math.atan(2.0 * params.wheelbase * math.sin(alpha) / lookahead)
    return steering, s_proj


class BotSequential:
    """Commit the lap as one PathSet, then step the setpoint up to v_max."""

    def __init__(self, world: WorldMap, params: VehicleParams, heartbeat_period: float,
                 options: Optional[dict] = None) -> None:
        opts = options or {}
        self.params = params
        self.heartbeat_period = heartbeat_period
        self.waypoints = centerline_waypoints(world, float(opts.get("wp_spacing", WP_SPACING)))
        self.silence_at = opts.get("silence_at_progress")
        self.key_cadence = float(opts.get("key_cadence", KEY_CADENCE))
        self.silenced = False
        self.committed = False
        self.path_version = 1
        self._ack_deadline: Optional[float] = None
        self._next_heartbeat = 0.0
        self._next_key = 0.0

    def start(self, send: Send, now: float) -> None:
        send("Hello", {"role": "operator"})
        self._send_path(send, now)

    def _send_path(self, send: Send, now: float) -> None:
        send("PathSet", {"version": self.path_version,
                         "waypoints": [[x, y] for x, y in self.waypoints]})
        self._ack_deadline = now + PATHSET_RETRY

    def on_message(self, msg: Message, send: Send, now: float) -> None:
        if self.silenced:
            return
        if msg.kind == "Ack" and msg.payload.get("version") == self.path_version:
            if msg.payload.get("ok"):
                self.committed = True
                self._ack_deadline = None
            else:
                self._ack_deadline = now  # rejected; retry immediately
        elif msg.kind == "Telemetry":
            tele = msg.payload
            if self.silence_at is not None and tele.get("s_progress", 0.0) >= self.silence_at:
                self.silenced = True
                return
            if (self.committed and now >= self._next_key
                    and tele.get("target_v", 0.0) < self.params.v_max - 1e-9):
                send("VelocityCmd", {"event": "accelerate"})
                self._next_key = now + self.key_cadence

    def tick(self, send: Send, now: float) -> None:
        if self.silenced:
            return
        if not self.committed and self._ack_deadline is not None and now >= self._ack_deadline:
            self._send_path(send, now)
        if now >= self._next_heartbeat:
            send("Heartbeat", {})
            self._next_heartbeat = now + self.heartbeat_period


class BotDirect:
    """Steer toward the reference centerline from delayed telemetry, pedal held."""

    def __init__(self, world: WorldMap, params: VehicleParams, heartbeat_period: float,
                 options: Optional[dict] = None) -> None:
        opts = options or {}
        self.params = params
        self.heartbeat_period = heartbeat_period
        self.pts, self.s = _centerline_table(world)
        self.lookahead = float(opts.get("lookahead", DIRECT_LOOKAHEAD))
        self.silence_at = opts.get("silence_at_progress")
        self.silenced = False
        self.progress = 0.0
        self._next_heartbeat = 0.0

    def start(self, send: Send, now: float) -> None:
        send("Hello", {"role": "operator"})

    def on_message(self, msg: Message, send: Send, now: float) -> None:
        if self.silenced or msg.kind != "Telemetry":
            return
        tele = msg.payload
        if self.silence_at is not None and self.progress >= self.silence_at:
            self.silenced = True
            return
        steering, self.progress = polyline_pursuit(
            (tele["x"], tele["y"], tele["heading"]), self.pts, self.s,
            self.progress, self.lookahead, self.params)
        steer_norm = max(-1.0, min(1.0, steering / self.params.max_steering))
        # brake at the end of the reference line instead of driving off it
        remaining = float(self.s[-1]) - self.progress
        v = float(tele.get("v", 0.0))
        pedal = "accel"
        if remaining <= v * v / (2.0 * self.params.decel) + 0.05:
            pedal = "brake"
        send("DirectCmd", {"steer": steer_norm, "pedal": pedal})

    def tick(self, send: Send, now: float) -> None:
        if self.silenced:
            return
        if now >= self._next_heartbeat:
            send("Heartbeat", {})
            self._next_heartbeat = now + self.heartbeat_period
