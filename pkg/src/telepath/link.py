"""Operator-vehicle wire protocol and the lossy channel model.

Frames are a 4-byte big-endian length prefix followed by a canonical UTF-8
JSON body (sorted keys, no whitespace), so encoding the same message twice
is byte-identical. The channel injects one-way latency, uniform jitter and
Bernoulli loss, while preserving per-sender FIFO order; with a fixed seed the
whole delivery schedule is reproducible.
"""

from __future__ import annotations

import enum
import json
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

MAX_FRAME_BYTES = 1 << 20  # 1 MiB

KINDS = frozenset({
    "Hello", "Heartbeat", "PathSet", "PathState", "VelocityCmd",
    "DirectCmd", "Telemetry", "SessionEvent", "Ack",
})


class FrameError(ValueError):
    """Truncated or oversized frame; framing is no longer trustworthy."""


class SchemaError(ValueError):
    """Frame arrived intact but the body is not a valid message."""


@dataclass(frozen=True)
class Message:
    kind: str
    seq: int
    sent_at: float
    payload: dict = field(default_factory=dict)


def encode(msg: Message) -> bytes:
    """Length-prefixed canonical JSON encoding of a message."""
    body = json.dumps(
        {"kind": msg.kind, "seq": msg.seq, "sent_at": msg.sent_at, "payload": msg.payload},
        sort_keys=True, separators=(",", ":"), allow_nan=False,
    ).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def decode(data: bytes) -> Message:
    """Inverse of encode for exactly one frame."""
    if len(data) < 4:
        raise FrameError(f"truncated length prefix ({len(data)} bytes)")
    (length,) = struct.unpack(">I", data[:4])
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {length} bytes exceeds the {MAX_FRAME_BYTES} limit")
    if len(data) != 4 + length:
        raise FrameError(f"expected {4 + length} bytes, got {len(data)}")
    return _parse_body(data[4:])


def _parse_body(body: bytes) -> Message:
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"message body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("message body must be a JSON object")
    for key in ("kind", "seq", "sent_at", "payload"):
        if key not in doc:
            raise SchemaError(f"missing field '{key}'")
    kind = doc["kind"]
    if kind not in KINDS:
        raise SchemaError(f"unknown kind '{kind}'")
    seq = doc["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise SchemaError("'seq' must be a non-negative integer")
    sent_at = doc["sent_at"]
    if not isinstance(sent_at, (int, float)) or isinstance(sent_at, bool) or not math.isfinite(sent_at):
        raise SchemaError("'sent_at' must be a finite number")
    if not isinstance(doc["payload"], dict):
        raise SchemaError("'payload' must be an object")
    return Message(kind=kind, seq=seq, sent_at=float(sent_at), payload=doc["payload"])


class FrameReader:
    """Incremental splitter for a byte stream of length-prefixed frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> Iterator[bytes]:
        """Yield complete frames (prefix included) as they become available."""
        self._buf.extend(data)
        while len(self._buf) >= 4:
            (length,) = struct.unpack(">I", self._buf[:4])
            if length > MAX_FRAME_BYTES:
                raise FrameError(f"frame of {length} bytes exceeds the {MAX_FRAME_BYTES} limit")
            if len(self._buf) < 4 + length:
                return
            frame = bytes(self._buf[:4 + length])
            del self._buf[:4 + length]
            yield frame


@dataclass(frozen=True)
class LinkConfig:
    latency: float = 0.05        # one-way mean, seconds
    jitter: float = 0.0          # uniform half-width, seconds
    loss_rate: float = 0.0
    heartbeat_period: float = 0.1
    disconnect_timeout: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.latency < 0:
            raise ValueError("latency must be non-negative")
        if not 0.0 <= self.jitter <= max(self.latency, 0.0):
            raise ValueError("jitter must lie in [0, latency]")
        if not 0.0 <= self.loss_rate < 1.0:
            raise ValueError("loss_rate must lie in [0, 1)")
        if not self.heartbeat_period < self.disconnect_timeout:
            raise ValueError("heartbeat_period must be below disconnect_timeout")


class Channel:
    """One direction of the lossy link (a single sender, hence FIFO).

    ``deliver`` returns the scheduled delivery time, or None when the message
    is dropped. Delivery times are clamped to be non-decreasing so reordering
    can never happen within the channel.
    """

    def __init__(self, config: LinkConfig, seed_label: str) -> None:
        self.config = config
        self._rng = random.Random(f"{config.seed}:{seed_label}")
        self._last_delivery = -math.inf

    def deliver(self, now: float) -> Optional[float]:
        cfg = self.config
        if cfg.loss_rate > 0.0 and self._rng.random() < cfg.loss_rate:
            return None
        delay = cfg.latency
        if cfg.jitter > 0.0:
            delay += self._rng.uniform(-cfg.jitter, cfg.jitter)
        t = now + max(delay, 0.0)
        t = max(t, self._last_delivery)
        self._last_delivery = t
        return t


class LinkStatus(str, enum.Enum):
    CONNECTED = "connected"
    DISCONNECTED = "disconnected"


def liveness(last_heard: float, now: float, config: LinkConfig) -> LinkStatus:
    """Disconnected strictly after the timeout elapses with no traffic."""
    if now - last_heard > config.disconnect_timeout:
        return LinkStatus.DISCONNECTED
    return LinkStatus.CONNECTED


class DisconnectPolicy(str, enum.Enum):
    STOP_ON_PATH = "stop_on_path"
    FINISH_PATH = "finish_path"


@dataclass(frozen=True)
class SafetyAction:
    """What the vehicle does the moment the operator link is declared dead."""

    zero_setpoint: bool = False      # sequential: brake to rest, stay on path
    freeze_steering: bool = False    # direct: hold the current steering angle
    full_brake: bool = False         # direct: maximum deceleration to rest


def on_disconnect(sequential: bool,
                  policy: DisconnectPolicy = DisconnectPolicy.STOP_ON_PATH) -> SafetyAction:
    """Safety action for a just-detected disconnect.

    In sequential mode the vehicle keeps tracking the committed path; under
    ``stop_on_path`` the setpoint is forced to zero so it brakes to a
    standstill on the path, under ``finish_path`` it continues to the path
    end at the last setpoint. In direct mode steering freezes and the
    vehicle brakes immediately.
    """
    if sequential:
        return SafetyAction(zero_setpoint=policy is DisconnectPolicy.STOP_ON_PATH)
    return SafetyAction(freeze_steering=True, full_brake=True)


# --- payload helpers --------------------------------------------------------

def path_state_payload(spline, report, boundaries, predicted, frozen: bool,
                       version: int, decimate: int = 10,
                       predicted_decimate: int = 10) -> dict:
    """Wire payload mirroring the vehicle-side path artifacts.

    The centerline/boundaries are decimated for transport; feasibility
    segments and the waypoint list are exact.
    """
    idx = list(range(0, len(spline.s), decimate))
    if idx[-1] != len(spline.s) - 1:
        idx.append(len(spline.s) - 1)
    centerline = [[float(spline.s[i]), float(spline.x[i]), float(spline.y[i]),
                   float(spline.heading[i]), float(spline.curvature[i])] for i in idx]
    left = [[float(x), float(y)] for x, y in boundaries.left[idx]]
    right = [[float(x), float(y)] for x, y in boundaries.right[idx]]
    segments = [[seg.s_start, seg.s_end, seg.feasible] for seg in report.segments]
    pred = []
    if predicted is not None:
        states = predicted.states
        pidx = list(range(0, len(states), predicted_decimate))
        if pidx[-1] != len(states) - 1:
            pidx.append(len(states) - 1)
        pred = [[states[i].x, states[i].y, states[i].heading] for i in pidx]
    return {
        "version": version,
        "waypoints": [[w.x, w.y] for w in spline.waypoints],
        "total_length": spline.total_length,
        "centerline": centerline,
        "left": left,
        "right": right,
        "segments": segments,
        "kappa_max": report.kappa_max,
        "predicted": pred,
        "frozen": frozen,
    }


def empty_path_state_payload(version: int, frozen: bool = False) -> dict:
    return {
        "version": version, "waypoints": [], "total_length": 0.0,
        "centerline": [], "left": [], "right": [], "segments": [],
        "kappa_max": 0.0, "predicted": [], "frozen": frozen,
    }
