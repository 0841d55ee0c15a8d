"""Headless session host: scenario config, fixed-step loop, session log.

One simulation thread owns all mutable state. Each tick it drains due link
deliveries, lets the operator (bot or external transport) act, runs the
controller, steps the vehicle, checks collisions and the finish line, and
appends log records. Everything any component does is a deterministic
function of (scenario, seed), so the same run always produces the same log
bytes.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import controller, link, path_core, world as world_mod
from .bots import BotDirect, BotSequential
from .link import Channel, DisconnectPolicy, LinkConfig, Message, on_disconnect
from .maps import default_map
from .vehicle import ControlInput, VehicleParams, VehicleState, footprint, step
from .world import WorldMap, clearance, collides, crossed_finish, load_map

SCENARIO_FORMAT = "telepath-scenario/1"
LOG_FORMAT = "telepath-log/1"

# Finish crossings only count after this much travelled distance, so a lap
# cannot end at the spawn point.
FINISH_ARM_DISTANCE = 1.0


class ScenarioError(ValueError):
    """The scenario configuration is unusable."""


@dataclass(frozen=True)
class Scenario:
    name: str
    world: WorldMap
    params: VehicleParams
    link: LinkConfig
    mode: str                      # "sequential" | "direct"
    operator: str                  # "external" | "bot_sequential" | "bot_direct"
    dt: float = 0.01
    clock: str = "fast"            # "fast" | "realtime"
    seed: int = 0
    lookahead: float = controller.LOOKAHEAD
    step_dv: float = controller.STEP_DV
    freeze_path: bool = True
    disconnect_policy: DisconnectPolicy = DisconnectPolicy.STOP_ON_PATH
    timeout_s: float = 600.0
    collision_limit: int = 25
    telemetry_hz: float = 20.0
    bot_options: dict = field(default_factory=dict)
    snapshot: dict = field(default_factory=dict)


def _scenario_snapshot(name, map_doc, map_ref, params, link_cfg, mode, operator, dt,
                       clock, seed, lookahead, step_dv, freeze_path, policy,
                       timeout_s, collision_limit, telemetry_hz, bot_options) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "name": name,
        "map": map_ref,
        "map_doc": map_doc,
        "mode": mode,
        "operator": operator,
        "seed": seed,
        "dt": dt,
        "clock": clock,
        "vehicle": {
            "wheelbase": params.wheelbase, "max_steering": params.max_steering,
            "width": params.width, "length": params.length, "v_max": params.v_max,
            "accel": params.accel, "decel": params.decel,
        },
        "link": {
            "latency": link_cfg.latency, "jitter": link_cfg.jitter,
            "loss_rate": link_cfg.loss_rate, "heartbeat_period": link_cfg.heartbeat_period,
            "disconnect_timeout": link_cfg.disconnect_timeout, "seed": link_cfg.seed,
        },
        "controller": {"lookahead": lookahead, "step_dv": step_dv},
        "freeze_path_while_moving": freeze_path,
        "disconnect_policy": policy.value,
        "session": {"timeout_s": timeout_s, "collision_limit": collision_limit,
                    "telemetry_hz": telemetry_hz},
        "bot": bot_options,
    }


def make_scenario(world: WorldMap, *, name: str = "session", map_ref: str = "inline",
                  params: Optional[VehicleParams] = None,
                  link_cfg: Optional[LinkConfig] = None,
                  mode: str = "sequential", operator: str = "bot_sequential",
                  dt: float = 0.01, clock: str = "fast", seed: int = 0,
                  lookahead: float = controller.LOOKAHEAD,
                  step_dv: float = controller.STEP_DV, freeze_path: bool = True,
                  disconnect_policy: str = "stop_on_path", timeout_s: float = 600.0,
                  collision_limit: int = 25, telemetry_hz: float = 20.0,
                  bot_options: Optional[dict] = None) -> Scenario:
    """Assemble a validated Scenario programmatically."""
    params = params or VehicleParams()
    base_link = link_cfg or LinkConfig()
    link_cfg = LinkConfig(latency=base_link.latency, jitter=base_link.jitter,
                          loss_rate=base_link.loss_rate,
                          heartbeat_period=base_link.heartbeat_period,
                          disconnect_timeout=base_link.disconnect_timeout, seed=seed)
    if mode not in ("sequential", "direct"):
        raise ScenarioError(f"unknown mode '{mode}'")
    if operator not in ("external", "bot_sequential", "bot_direct"):
        raise ScenarioError(f"unknown operator '{operator}'")
    if clock not in ("fast", "realtime"):
        raise ScenarioError(f"unknown clock '{clock}'")
    if not 0.0 < dt <= 0.05:
        raise ScenarioError(f"dt must lie in (0, 0.05], got {dt}")
    policy = DisconnectPolicy(disconnect_policy)
    bot_options = dict(bot_options or {})
    map_doc = json.loads(world_mod.save_map(world))
    snapshot = _scenario_snapshot(name, map_doc, map_ref, params, link_cfg, mode,
                                  operator, dt, clock, seed, lookahead, step_dv,
                                  freeze_path, policy, timeout_s, collision_limit,
                                  telemetry_hz, bot_options)
    return Scenario(name=name, world=world, params=params, link=link_cfg, mode=mode,
                    operator=operator, dt=dt, clock=clock, seed=seed,
                    lookahead=lookahead, step_dv=step_dv, freeze_path=freeze_path,
                    disconnect_policy=policy, timeout_s=timeout_s,
                    collision_limit=collision_limit, telemetry_hz=telemetry_hz,
                    bot_options=bot_options, snapshot=snapshot)


def resolve_map(map_ref: str, base_dir: Optional[Path] = None) -> WorldMap:
    """Load a map by reference: the literal "default" or a file path."""
    if map_ref == "default":
        return default_map()
    path = Path(map_ref)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read map '{map_ref}': {exc}") from exc
    return load_map(text)


def scenario_from_file(path: str | Path, *, seed: Optional[int] = None,
                       clock: Optional[str] = None) -> Scenario:
    """Parse a ``telepath-scenario/1`` JSON file; flags can override seed/clock."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SCENARIO_FORMAT:
        raise ScenarioError(f"scenario must declare format '{SCENARIO_FORMAT}'")
    try:
        map_ref = doc.get("map", "default")
        world = resolve_map(map_ref, base_dir=path.parent)
        params = VehicleParams(**doc.get("vehicle", {}))
        link_doc = dict(doc.get("link", {}))
        link_doc.pop("seed", None)
        ctrl = doc.get("controller", {})
        session = doc.get("session", {})
        return make_scenario(
            world,
            name=doc.get("name", path.stem),
            map_ref=str(map_ref),
            params=params,
            link_cfg=LinkConfig(**link_doc),
            mode=doc.get("mode", "sequential"),
            operator=doc.get("operator", "bot_sequential"),
            dt=float(doc.get("dt", 0.01)),
            clock=clock or doc.get("clock", "fast"),
            seed=seed if seed is not None else int(doc.get("seed", 0)),
            lookahead=float(ctrl.get("lookahead", controller.LOOKAHEAD)),
            step_dv=float(ctrl.get("step_dv", controller.STEP_DV)),
            freeze_path=bool(doc.get("freeze_path_while_moving", True)),
            disconnect_policy=doc.get("disconnect_policy", "stop_on_path"),
            timeout_s=float(session.get("timeout_s", 600.0)),
            collision_limit=int(session.get("collision_limit", 25)),
            telemetry_hz=float(session.get("telemetry_hz", 20.0)),
            bot_options=doc.get("bot", {}),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid scenario configuration: {exc}") from exc


@dataclass
class SessionLog:
    scenario: dict
    records: list = field(default_factory=list)

    def to_ndjson(self) -> bytes:
        lines = [json.dumps({"type": "header", "format": LOG_FORMAT,
                             "scenario": self.scenario},
                            sort_keys=True, separators=(",", ":"))]
        lines.extend(json.dumps(r, sort_keys=True, separators=(",", ":"))
                     for r in self.records)
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def from_ndjson(cls, data: bytes) -> "SessionLog":
        lines = data.decode("utf-8").splitlines()
        if not lines:
            raise ValueError("empty log")
        header = json.loads(lines[0])
        if header.get("type") != "header" or header.get("format") != LOG_FORMAT:
            raise ValueError("log must start with a telepath-log/1 header record")
        return cls(scenario=header["scenario"],
                   records=[json.loads(line) for line in lines[1:] if line])


class _ExternalOperator:
    """Bridges a transport server into the operator seat (realtime sessions)."""

    def __init__(self, transport) -> None:
        self.transport = transport

    def start(self, send, now) -> None:
        pass

    def on_message(self, msg: Message, send, now) -> None:
        self.transport.broadcast(link.encode(msg))

    def tick(self, send, now) -> None:
        for raw in self.transport.poll():
            try:
                msg = link.decode(raw)
            except (link.FrameError, link.SchemaError):
                send("__schema_error__", {})
                continue
            send("__raw__", msg)


class Session:
    """A single operator-vehicle run around the simulated link."""

    def __init__(self, scenario: Scenario, transport=None) -> None:
        self.sc = scenario
        self.world = scenario.world
        self.params = scenario.params
        sx, sy, sh = self.world.start_pose
        self.state = VehicleState(x=sx, y=sy, heading=sh)
        self.setpoint = controller.SpeedSetpoint(0.0, scenario.step_dv)
        self.spline: Optional[path_core.PathSpline] = None
        self.s_progress = 0.0
        self.path_version = 0
        self.last_direct = ControlInput()
        self.safety_active = False
        self.connected = True
        self.pending_hello = False
        self.last_heard_op = 0.0
        self.finished = False
        self.distance = 0.0
        self.collision_episodes = 0
        self._in_collision = False
        self.tick_index = 0
        self.log = SessionLog(scenario=scenario.snapshot)

        self.op2veh = Channel(scenario.link, "op2veh")
        self.veh2op = Channel(scenario.link, "veh2op")
        self._queue: list = []
        self._queue_n = 0
        self._op_seq = 0
        self._veh_seq = 0

        self._telemetry_every = max(1, round(1.0 / (scenario.telemetry_hz * scenario.dt)))
        self._heartbeat_every = max(1, round(scenario.link.heartbeat_period / scenario.dt))

        if scenario.operator == "bot_sequential":
            self.operator = BotSequential(self.world, self.params,
                                          scenario.link.heartbeat_period,
                                          scenario.bot_options)
        elif scenario.operator == "bot_direct":
            self.operator = BotDirect(self.world, self.params,
                                      scenario.link.heartbeat_period,
                                      scenario.bot_options)
        else:
            if transport is None:
                raise ScenarioError("operator 'external' needs a transport")
            self.operator = _ExternalOperator(transport)

    # --- clock ---------------------------------------------------------

    @property
    def now(self) -> float:
        return self.tick_index * self.sc.dt

    # --- message plumbing ------------------------------------------------

    def _push(self, at: float, direction: str, msg: Message) -> None:
        heapq.heappush(self._queue, (at, self._queue_n, direction, msg))
        self._queue_n += 1

    def _log_msg(self, event: str, t: float, direction: str, msg: Message) -> None:
        rec = {"type": "message", "event": event, "t": round(t, 9),
               "dir": direction, "kind": msg.kind, "seq": msg.seq}
        if direction == "op2veh" and msg.kind in ("PathSet", "VelocityCmd", "DirectCmd", "Hello"):
            rec["payload"] = msg.payload
        self.log.records.append(rec)

    def _operator_send(self, kind: str, payload) -> None:
        now = self.now
        if kind == "__schema_error__":
            self._event("schema_error", {})
            return
        if kind == "__raw__":
            msg = payload  # already a decoded Message from the transport
        else:
            self._op_seq += 1
            msg = Message(kind=kind, seq=self._op_seq, sent_at=now, payload=payload)
        self._log_msg("sent", now, "op2veh", msg)
        at = self.op2veh.deliver(now)
        if at is None:
            self._log_msg("dropped", now, "op2veh", msg)
        else:
            self._push(at, "op2veh", msg)

    def _vehicle_send(self, kind: str, payload: dict) -> None:
        now = self.now
        self._veh_seq += 1
        msg = Message(kind=kind, seq=self._veh_seq, sent_at=now, payload=payload)
        self._log_msg("sent", now, "veh2op", msg)
        at = self.veh2op.deliver(now)
        if at is None:
            self._log_msg("dropped", now, "veh2op", msg)
        else:
            self._push(at, "veh2op", msg)

    def _event(self, name: str, data: dict) -> None:
        self.log.records.append({"type": "event", "t": round(self.now, 9),
                                 "name": name, "data": data})

    # --- vehicle message handling -----------------------------------------

    def _handle_operator_msg(self, msg: Message, now: float) -> None:
        if msg.kind == "Hello":
            self.last_heard_op = now
            if self.pending_hello or not self.connected:
                self.pending_hello = False
                self.connected = True
                self.safety_active = False
                self.last_direct = ControlInput()
                self._event("reconnect", {})
            self._vehicle_send("Hello", {"role": "vehicle"})
            self._send_path_state()
            return
        self.last_heard_op = now
        if self.pending_hello:
            self._event("ignored_command", {"kind": msg.kind, "seq": msg.seq})
            return
        if msg.kind == "Heartbeat":
            return
        if msg.kind == "PathSet":
            self._apply_path_set(msg)
        elif msg.kind == "VelocityCmd":
            self._apply_velocity_cmd(msg)
        elif msg.kind == "DirectCmd":
            self._apply_direct_cmd(msg)

    def _apply_path_set(self, msg: Message) -> None:
        version = msg.payload.get("version")
        waypoints = msg.payload.get("waypoints", [])
        frozen = self.sc.freeze_path and self.state.v > 0.0

        def reject(error: str) -> None:
            self._event("path_rejected", {"version": version, "error": error})
            self._vehicle_send("Ack", {"version": version, "ok": False, "error": error})

        if self.sc.mode != "sequential":
            reject("WrongMode")
            return
        if len(waypoints) < 2:
            if frozen:
                reject("PathFrozen")
                return
            self.spline = None
            self.s_progress = 0.0
            self.path_version += 1
            self._event("path_cleared", {"version": version})
            self._vehicle_send("Ack", {"version": version, "ok": True})
            self._send_path_state()
            return
        if frozen:
            old = [[w.x, w.y] for w in self.spline.waypoints] if self.spline else []
            if waypoints != old:
                changed_len = len(waypoints) != len(old)
                if changed_len:
                    reject("PathFrozen")
                    return
                for i, (new_wp, old_wp) in enumerate(zip(waypoints, old)):
                    if new_wp != old_wp:
                        wp_s, _ = path_core.project(self.spline, tuple(old_wp))
                        if wp_s <= self.s_progress:
                            reject("PassedWaypointImmutable")
                            return
        try:
            new_spline = path_core.build_spline([tuple(w) for w in waypoints])
        except (path_core.TooFewWaypoints, path_core.DegenerateInput) as exc:
            reject(type(exc).__name__)
            return
        self.spline = new_spline
        if self.state.v == 0.0:
            self.s_progress = controller.progress_on_path(
                new_spline, (self.state.x, self.state.y), 0.0)
        self.path_version += 1
        self._event("path_committed", {
            "version": version, "path_version": self.path_version,
            "waypoints": [[w.x, w.y] for w in new_spline.waypoints],
            "total_length": new_spline.total_length,
        })
        self._vehicle_send("Ack", {"version": version, "ok": True})
        self._send_path_state()

    def _apply_velocity_cmd(self, msg: Message) -> None:
        if self.sc.mode != "sequential":
            self._event("ignored_command", {"kind": msg.kind, "reason": "direct mode"})
            return
        event_name = msg.payload.get("event")
        try:
            event = controller.VelocityEvent(event_name)
        except ValueError:
            self._event("ignored_command", {"kind": msg.kind, "reason": f"bad event {event_name!r}"})
            return
        if self.spline is None and event is controller.VelocityEvent.ACCELERATE:
            self._event("no_path", {})
            return
        self.setpoint = controller.update_setpoint(self.setpoint, event, self.params)

    def _apply_direct_cmd(self, msg: Message) -> None:
        if self.sc.mode != "direct":
            self._event("ignored_command", {"kind": msg.kind, "reason": "sequential mode"})
            return
        steer = float(msg.payload.get("steer", 0.0))
        try:
            pedal = controller.Pedal(msg.payload.get("pedal", "none"))
        except ValueError:
            pedal = controller.Pedal.NONE
        self.last_direct = controller.direct_command(steer, pedal, self.params)

    def _send_path_state(self) -> None:
        if self.spline is None:
            payload = link.empty_path_state_payload(self.path_version)
        else:
            report = path_core.check_feasibility(self.spline, self.params)
            boundaries = path_core.offset_boundaries(self.spline, self.params.width)
            preview_sp = controller.SpeedSetpoint(self.params.v_max, self.sc.step_dv)
            predicted = controller.simulate_tracking(
                self.spline, self.state, preview_sp, self.params,
                dt=self.sc.dt, lookahead=self.sc.lookahead)
            payload = link.path_state_payload(
                self.spline, report, boundaries, predicted,
                frozen=self.sc.freeze_path and self.state.v > 0.0,
                version=self.path_version)
        self._vehicle_send("PathState", payload)

    # --- safety --------------------------------------------------------

    def _check_liveness(self) -> None:
        if not self.connected:
            return
        if link.liveness(self.last_heard_op, self.now, self.sc.link) is link.LinkStatus.DISCONNECTED:
            self.connected = False
            self.pending_hello = True
            self.safety_active = True
            action = on_disconnect(self.sc.mode == "sequential", self.sc.disconnect_policy)
            if action.zero_setpoint:
                self.setpoint = controller.SpeedSetpoint(0.0, self.sc.step_dv)
            if action.freeze_steering or action.full_brake:
                self.last_direct = ControlInput(steering_target=self.state.steering,
                                                accel_cmd=-self.params.decel)
            self._event("disconnect", {"last_heard": round(self.last_heard_op, 9)})

    # --- main loop -------------------------------------------------------

    def _mode_label(self) -> str:
        if self.safety_active:
            return controller.Mode.SAFETY_STOPPING.value
        if self.sc.mode == "direct":
            return controller.Mode.DIRECT.value
        if self.spline is not None and (self.state.v > 0.0 or self.setpoint.target_v > 0.0):
            return controller.Mode.SEQUENTIAL_DRIVING.value
        return controller.Mode.SEQUENTIAL_IDLE.value

    def _control(self) -> ControlInput:
        if self.sc.mode == "sequential":
            if self.spline is not None and (self.state.v > 0.0 or self.setpoint.target_v > 0.0):
                control, self.s_progress = controller.sequential_control(
                    self.state, self.spline, self.setpoint, self.params,
                    self.sc.lookahead, self.s_progress)
                return control
            return ControlInput(steering_target=self.state.steering, accel_cmd=0.0)
        if self.safety_active:
            return ControlInput(steering_target=self.state.steering,
                                accel_cmd=-self.params.decel if self.state.v > 0.0 else 0.0)
        return self.last_direct

    def tick(self) -> Optional[str]:
        """Run one dt step; returns a termination reason or None."""
        now = self.now
        if self.tick_index == 0:
            self.operator.start(self._operator_send, now)

        while self._queue and self._queue[0][0] <= now:
            at, _, direction, msg = heapq.heappop(self._queue)
            self._log_msg("delivered", now, direction, msg)
            if direction == "op2veh":
                self._handle_operator_msg(msg, now)
            else:
                self.operator.on_message(msg, self._operator_send, now)

        self._check_liveness()
        self.operator.tick(self._operator_send, now)

        if self.tick_index % self._heartbeat_every == 0:
            self._vehicle_send("Heartbeat", {})

        prev = self.state
        control = self._control()
        self.state = step(self.state, control, self.params, self.sc.dt)
        moved = math.hypot(self.state.x - prev.x, self.state.y - prev.y)
        if moved > 0.0 and self.distance == 0.0:
            self._event("start_moving", {})
        self.distance += moved

        fp = footprint(self.state, self.params)
        hits = collides(fp, self.world)
        if hits:
            self.log.records.append({"type": "collision", "t": round(now, 9),
                                     "indices": hits})
            if not self._in_collision:
                self.collision_episodes += 1
            self._in_collision = True
        else:
            self._in_collision = False

        if (not self.finished and self.distance >= FINISH_ARM_DISTANCE
                and crossed_finish((prev.x, prev.y), (self.state.x, self.state.y), self.world)):
            self.finished = True
            self._event("finish", {})

        if self.tick_index % self._telemetry_every == 0:
            self._send_telemetry(fp)

        self.log.records.append({
            "type": "tick", "t": round(now, 9),
            "x": self.state.x, "y": self.state.y, "heading": self.state.heading,
            "v": self.state.v, "steering": self.state.steering,
            "target_v": self.setpoint.target_v, "mode": self._mode_label(),
            "s_progress": self.s_progress,
        })
        self.tick_index += 1

        if self.finished:
            return "finish"
        if self.now >= self.sc.timeout_s:
            return "timeout"
        if self.collision_episodes >= self.sc.collision_limit:
            return "collision_limit"
        return None

    def _send_telemetry(self, fp) -> None:
        lateral = 0.0
        if self.sc.mode == "sequential" and self.spline is not None:
            _, lateral = path_core.project(self.spline, (self.state.x, self.state.y))
        elif self.world.centerline_array is not None:
            lateral = world_mod.point_to_polyline_distance(
                self.world.centerline_array, (self.state.x, self.state.y))
        clear = clearance(fp, self.world)
        self._vehicle_send("Telemetry", {
            "t": round(self.now, 9),
            "x": self.state.x, "y": self.state.y, "heading": self.state.heading,
            "v": self.state.v, "steering": self.state.steering,
            "target_v": self.setpoint.target_v,
            "s_progress": self.s_progress, "lateral": lateral,
            "clearance": clear if math.isfinite(clear) else None,
            "mode": self._mode_label(), "connected": self.connected,
        })


def run(scenario: Scenario, transport=None, stop=None) -> SessionLog:
    """Run a session to termination and return its log.

    ``stop`` is an optional callable polled once per tick; truthy means
    terminate (external stop). Realtime clock paces ticks against the wall
    clock but has no effect on the log contents.
    """
    session = Session(scenario, transport=transport)
    realtime = scenario.clock == "realtime"
    wall_start = time.monotonic()
    reason = None
    try:
        while reason is None:
            if stop is not None and stop():
                reason = "stopped"
                break
            reason = session.tick()
            if reason is not None:
                break
            if realtime:
                target = wall_start + session.now
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
    except KeyboardInterrupt:
        reason = "stopped"
    session._event("terminated", {"reason": reason})
    return session.log
