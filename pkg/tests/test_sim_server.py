import json
import math
import statistics

import numpy as np
import pytest

from telepath import link, metrics, path_core, sim_server
from telepath.bots import MissingCenterline, centerline_waypoints
from telepath.link import LinkConfig, Message, encode
from telepath.maps import make_stadium_map, _stadium_pose
from telepath.sim_server import Scenario, ScenarioError, Session, SessionLog, make_scenario, run
from telepath.vehicle import VehicleParams
from telepath.world import WorldMap, load_map, save_map


IDEAL_LINK = LinkConfig(latency=0.0, jitter=0.0, loss_rate=0.0)
LOSSY_LINK = LinkConfig(latency=0.05, jitter=0.01, loss_rate=0.01)
# scripted stub "UIs" below send no heartbeats; keep their sessions connected
PATIENT_LINK = LinkConfig(latency=0.0, heartbeat_period=1.0, disconnect_timeout=1e9)


class StubTransport:
    """Scripted frame source standing in for a UI connection."""

    def __init__(self):
        self.inbox = []
        self.sent = []
        self._seq = 0

    def queue(self, kind, payload):
        self._seq += 1
        self.inbox.append(encode(Message(kind=kind, seq=self._seq, sent_at=0.0,
                                         payload=payload)))

    def queue_raw(self, data):
        self.inbox.append(data)

    def poll(self):
        out, self.inbox = self.inbox, []
        return out

    def broadcast(self, frame):
        self.sent.append(link.decode(frame))


def external_session(world, mode="sequential", link_cfg=PATIENT_LINK, **kw):
    sc = make_scenario(world, mode=mode, operator="external", link_cfg=link_cfg, **kw)
    transport = StubTransport()
    return Session(sc, transport=transport), transport


def run_ticks(session, n):
    for _ in range(n):
        reason = session.tick()
        if reason:
            return reason
    return None


def events(session_or_log, name=None):
    log = session_or_log.log if isinstance(session_or_log, Session) else session_or_log
    out = [r for r in log.records if r["type"] == "event"]
    if name:
        out = [r for r in out if r["name"] == name]
    return out


# --- scenario config --------------------------------------------------------

def test_scenario_file_roundtrip(tmp_path, stadium):
    map_path = tmp_path / "track.json"
    map_path.write_text(save_map(stadium))
    doc = {
        "format": "telepath-scenario/1",
        "name": "trial",
        "map": "track.json",
        "mode": "direct",
        "operator": "bot_direct",
        "seed": 5,
        "link": {"latency": 0.1, "jitter": 0.02, "loss_rate": 0.05},
        "vehicle": {"v_max": 0.5},
        "session": {"timeout_s": 120},
    }
    sc_path = tmp_path / "trial.json"
    sc_path.write_text(json.dumps(doc))
    sc = sim_server.scenario_from_file(sc_path)
    assert sc.name == "trial" and sc.mode == "direct" and sc.seed == 5
    assert sc.params.v_max == 0.5
    assert sc.link.latency == 0.1 and sc.link.seed == 5
    assert sc.world == stadium
    sc2 = sim_server.scenario_from_file(sc_path, seed=9)
    assert sc2.seed == 9 and sc2.link.seed == 9


def test_scenario_validation(stadium):
    with pytest.raises(ScenarioError):
        make_scenario(stadium, mode="flying")
    with pytest.raises(ScenarioError):
        make_scenario(stadium, operator="human")
    with pytest.raises(ScenarioError):
        make_scenario(stadium, dt=0.2)


def test_scenario_bad_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{}")
    with pytest.raises(ScenarioError):
        sim_server.scenario_from_file(p)
    p.write_text(json.dumps({"format": "telepath-scenario/1", "map": "missing.json"}))
    with pytest.raises(ScenarioError):
        sim_server.scenario_from_file(p)


# --- bots -------------------------------------------------------------------

def test_bot_waypoint_spacing_counts():
    doc = {
        "format": "telepath-map/1", "name": "line",
        "bounds": {"min": [-1, -1], "max": [11, 1]},
        "start_pose": [0, 0, 0], "finish_line": [[10, 0.5], [10, -0.5]],
        "obstacles": [],
        "reference_centerline": [[0, 0], [10, 0]],
    }
    world = load_map(json.dumps(doc))
    assert len(centerline_waypoints(world, 1.0)) == 11


def test_bot_requires_centerline():
    doc = {
        "format": "telepath-map/1", "name": "bare",
        "bounds": {"min": [-1, -1], "max": [1, 1]},
        "start_pose": [0, 0, 0], "finish_line": [[0.5, 0.5], [0.5, -0.5]],
        "obstacles": [],
    }
    world = load_map(json.dumps(doc))
    with pytest.raises(MissingCenterline):
        make_scenario(world, operator="bot_sequential") and Session(
            make_scenario(world, operator="bot_sequential"))


def test_bot_path_is_feasible(stadium, params):
    waypoints = centerline_waypoints(stadium, 1.0)
    spline = path_core.build_spline(waypoints)
    report = path_core.check_feasibility(spline, params)
    assert report.all_feasible


# --- session behaviour ------------------------------------------------------

def test_no_path_velocity_command_logs_event(stadium):
    session, transport = external_session(stadium)
    transport.queue("VelocityCmd", {"event": "accelerate"})
    run_ticks(session, 50)
    assert events(session, "no_path")
    ticks = [r for r in session.log.records if r["type"] == "tick"]
    assert all(r["v"] == 0.0 for r in ticks)


def test_path_commit_ack_and_freeze(stadium):
    session, transport = external_session(stadium)
    wps = [[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]]
    transport.queue("PathSet", {"version": 1, "waypoints": wps})
    run_ticks(session, 5)
    acks = [m for m in transport.sent if m.kind == "Ack"]
    assert acks and acks[-1].payload == {"version": 1, "ok": True}
    assert events(session, "path_committed")

    # get moving, then a length edit must be rejected
    transport.queue("VelocityCmd", {"event": "accelerate"})
    run_ticks(session, 200)
    assert session.state.v > 0.0
    transport.queue("PathSet", {"version": 2, "waypoints": wps + [[6.0, 0.0]]})
    run_ticks(session, 5)
    acks = [m for m in transport.sent if m.kind == "Ack" and m.payload.get("version") == 2]
    assert acks and acks[-1].payload["ok"] is False
    assert acks[-1].payload["error"] == "PathFrozen"


def test_moving_passed_waypoint_rejected(stadium):
    session, transport = external_session(stadium)
    # path along the start straight, beginning at the vehicle
    wps = [[-1.25, -4.0], [0.0, -4.0], [1.25, -4.0]]
    transport.queue("PathSet", {"version": 1, "waypoints": wps})
    for _ in range(7):
        transport.queue("VelocityCmd", {"event": "accelerate"})
    run_ticks(session, 450)          # drive past the middle waypoint
    assert session.state.v > 0.0
    assert session.s_progress > 1.3
    moved = [[-1.25, -4.0], [0.0, -3.5], [1.25, -4.0]]
    transport.queue("PathSet", {"version": 2, "waypoints": moved})
    run_ticks(session, 5)
    acks = [m for m in transport.sent if m.kind == "Ack" and m.payload.get("version") == 2]
    assert acks[-1].payload["error"] == "PassedWaypointImmutable"
    # moving a waypoint still ahead is allowed while driving
    ahead = [[-1.25, -4.0], [0.0, -4.0], [1.25, -3.8]]
    transport.queue("PathSet", {"version": 3, "waypoints": ahead})
    run_ticks(session, 5)
    acks = [m for m in transport.sent if m.kind == "Ack" and m.payload.get("version") == 3]
    assert acks[-1].payload["ok"] is True


def test_degenerate_pathset_rejected(stadium):
    session, transport = external_session(stadium)
    transport.queue("PathSet", {"version": 1, "waypoints": [[0, 0], [0.01, 0]]})
    run_ticks(session, 5)
    acks = [m for m in transport.sent if m.kind == "Ack"]
    assert acks[-1].payload["error"] == "DegenerateInput"


def test_schema_error_keeps_session_alive(stadium):
    session, transport = external_session(stadium)
    bad = b'{"kind":"Nonsense","seq":1,"sent_at":0,"payload":{}}'
    transport.queue_raw(len(bad).to_bytes(4, "big") + bad)
    transport.queue("PathSet", {"version": 1, "waypoints": [[0, 0], [2, 0]]})
    run_ticks(session, 5)
    assert events(session, "schema_error")
    assert events(session, "path_committed")


def test_wrong_mode_commands_ignored(stadium):
    session, transport = external_session(stadium, mode="direct")
    transport.queue("VelocityCmd", {"event": "accelerate"})
    run_ticks(session, 3)
    assert any(e["data"].get("kind") == "VelocityCmd"
               for e in events(session, "ignored_command"))


def test_direct_drive_and_brake(stadium):
    session, transport = external_session(stadium, mode="direct")
    transport.queue("DirectCmd", {"steer": 0.0, "pedal": "accel"})
    run_ticks(session, 300)
    assert session.state.v == pytest.approx(session.params.v_max)
    transport.queue("DirectCmd", {"steer": 0.0, "pedal": "brake"})
    run_ticks(session, 100)
    assert session.state.v == 0.0


# --- disconnect safety ------------------------------------------------------

def seq_disconnect_scenario(stadium, silence_at=5.0, policy="stop_on_path"):
    return make_scenario(
        stadium, name="cut", mode="sequential", operator="bot_sequential",
        link_cfg=IDEAL_LINK, seed=3, timeout_s=60.0, disconnect_policy=policy,
        bot_options={"silence_at_progress": silence_at})


def test_disconnect_brakes_to_rest_on_path(stadium, params):
    log = run(seq_disconnect_scenario(stadium))
    assert events(log, "disconnect")
    deliveries = [r for r in log.records
                  if r["type"] == "message" and r["event"] == "delivered" and r["dir"] == "op2veh"]
    t_last = max(r["t"] for r in deliveries)
    ticks = [r for r in log.records if r["type"] == "tick"]
    moving = [r for r in ticks if r["v"] > 0.0]
    t_stop = next(r["t"] for r in ticks if r["t"] > moving[0]["t"] and r["v"] == 0.0)
    budget = params.v_max / params.decel + 0.5 + 0.1
    assert t_stop - t_last <= budget
    # the whole stopping trajectory stays inside the width corridor
    committed = events(log, "path_committed")[-1]["data"]
    spline = path_core.build_spline([tuple(w) for w in committed["waypoints"]])
    for r in moving:
        _, lat = path_core.project(spline, (r["x"], r["y"]))
        assert abs(lat) < params.width / 2
    # and the vehicle stays down afterwards
    assert all(r["v"] == 0.0 for r in ticks if r["t"] > t_stop)


def test_disconnect_while_stopped_no_motion(stadium):
    log = run(make_scenario(
        stadium, mode="sequential", operator="bot_sequential", link_cfg=IDEAL_LINK,
        timeout_s=10.0, bot_options={"silence_at_progress": 0.0}))
    # silenced before any accelerate key: nothing ever moves
    ticks = [r for r in log.records if r["type"] == "tick"]
    assert all(r["v"] == 0.0 for r in ticks)
    assert events(log, "disconnect")


def test_finish_path_policy_keeps_driving(stadium):
    log_stop = run(seq_disconnect_scenario(stadium, policy="stop_on_path"))
    log_cont = run(seq_disconnect_scenario(stadium, policy="finish_path"))

    def distance(log):
        ticks = [r for r in log.records if r["type"] == "tick"]
        xy = np.array([[r["x"], r["y"]] for r in ticks])
        return float(np.hypot(*np.diff(xy, axis=0).T).sum())

    assert distance(log_cont) > distance(log_stop) + 5.0


def test_commands_ignored_until_hello(stadium):
    session, transport = external_session(stadium, link_cfg=IDEAL_LINK)
    transport.queue("Hello", {"role": "operator"})
    transport.queue("PathSet", {"version": 1, "waypoints": [[0, 0], [3, 0]]})
    run_ticks(session, 5)
    # fall silent past the disconnect timeout
    run_ticks(session, 80)
    assert events(session, "disconnect")
    transport.queue("VelocityCmd", {"event": "accelerate"})
    run_ticks(session, 5)
    assert any(e["data"].get("kind") == "VelocityCmd"
               for e in events(session, "ignored_command"))
    assert session.setpoint.target_v == 0.0
    transport.queue("Hello", {"role": "operator"})
    run_ticks(session, 5)
    assert events(session, "reconnect")
    transport.queue("VelocityCmd", {"event": "accelerate"})
    run_ticks(session, 5)
    assert session.setpoint.target_v > 0.0
    # reconnect handshake re-sends the path state
    assert any(m.kind == "PathState" for m in transport.sent)


# --- determinism and clock --------------------------------------------------

def short_scenario(stadium, **kw):
    defaults = dict(name="short", mode="sequential", operator="bot_sequential",
                    link_cfg=LOSSY_LINK, seed=21, timeout_s=12.0,
                    bot_options={"silence_at_progress": 2.0})
    defaults.update(kw)
    return make_scenario(stadium, **defaults)


def test_same_seed_byte_identical(stadium):
    a = run(short_scenario(stadium)).to_ndjson()
    b = run(short_scenario(stadium)).to_ndjson()
    assert a == b


def test_different_seed_differs(stadium):
    a = run(short_scenario(stadium)).to_ndjson()
    b = run(short_scenario(stadium, seed=22)).to_ndjson()
    assert a != b


def test_realtime_and_fast_logs_identical(stadium):
    # identical records; the header legitimately snapshots the clock setting
    fast = run(short_scenario(stadium, timeout_s=0.5))
    slow = run(short_scenario(stadium, timeout_s=0.5, clock="realtime"))
    assert fast.records == slow.records


def test_log_ndjson_roundtrip(stadium):
    log = run(short_scenario(stadium, timeout_s=2.0))
    back = SessionLog.from_ndjson(log.to_ndjson())
    assert back.scenario == log.scenario
    assert back.records == log.records


# --- laps and metrics -------------------------------------------------------

@pytest.fixture(scope="module")
def sequential_lap_log(stadium):
    return run(make_scenario(stadium, name="lap_seq", map_ref="default",
                             mode="sequential", operator="bot_sequential",
                             link_cfg=LOSSY_LINK, seed=1))


def test_sequential_lap_completes(sequential_lap_log, params):
    m = metrics.compute_metrics(sequential_lap_log)
    assert m.completed
    assert m.collision_count == 0 and m.distinct_obstacles_hit == 0
    assert m.task_completion_time >= 30.0 / params.v_max
    assert m.max_lateral_error < 0.05
    assert m.path_entered_length > 30.0


def test_metrics_recompute_from_serialized_log(sequential_lap_log):
    m1 = metrics.compute_metrics(sequential_lap_log)
    m2 = metrics.compute_metrics(SessionLog.from_ndjson(sequential_lap_log.to_ndjson()))
    assert m1 == m2


def test_direct_lap_completes(stadium):
    log = run(make_scenario(stadium, name="lap_dir", mode="direct",
                            operator="bot_direct", link_cfg=LOSSY_LINK, seed=1))
    m = metrics.compute_metrics(log)
    assert m.completed and m.collision_count == 0


def test_direct_latency_increases_lateral_error(stadium):
    # paired runs with the same tight-tracking bot; only the latency differs.
    # At walking speed the loop is overdamped for long lookaheads, so the
    # pair is run at the operating point where delay actually bites.
    def lateral(latency):
        cfg = LinkConfig(latency=latency, jitter=0.0, loss_rate=0.0)
        log = run(make_scenario(stadium, name="lat", mode="direct",
                                operator="bot_direct", link_cfg=cfg, seed=2,
                                timeout_s=150.0, bot_options={"lookahead": 0.35}))
        return metrics.compute_metrics(log).max_lateral_error

    assert lateral(0.3) > lateral(0.0)


def test_reverse_centerline_never_finishes(stadium):
    # drive the loop clockwise: the finish line only counts counterclockwise
    loop = 2.0 * 2.5 + 2.0 * math.pi * 4.0
    s_values = np.arange(0.0, loop + 0.5, 0.25)
    reversed_line = tuple(
        (round(p[0], 6), round(p[1], 6))
        for p in (_stadium_pose(-float(s), 4.0, 2.5) for s in s_values))
    world = WorldMap(name="reversed", bounds=stadium.bounds,
                     start_pose=(stadium.start_pose[0], stadium.start_pose[1], math.pi),
                     finish_line=stadium.finish_line, obstacles=stadium.obstacles,
                     reference_centerline=reversed_line)
    log = run(make_scenario(world, name="rev", mode="direct", operator="bot_direct",
                            link_cfg=IDEAL_LINK, seed=1, timeout_s=120.0))
    m = metrics.compute_metrics(log)
    assert not m.completed
    ticks = [r for r in log.records if r["type"] == "tick"]
    xy = np.array([[r["x"], r["y"]] for r in ticks])
    assert float(np.hypot(*np.diff(xy, axis=0).T).sum()) > 25.0   # it did drive the lap


# --- metrics unit cases -----------------------------------------------------

def synthetic_log(records, mode="sequential", name="synth"):
    return SessionLog(scenario={"name": name, "mode": mode, "seed": 0}, records=records)


def test_completion_time_subtraction():
    recs = [
        {"type": "tick", "t": 1.99, "x": 0.0, "y": 0.0, "v": 0.0},
        {"type": "tick", "t": 2.0, "x": 0.0, "y": 0.0, "v": 0.1},
        {"type": "event", "t": 90.0, "name": "finish", "data": {}},
    ]
    m = metrics.compute_metrics(synthetic_log(recs))
    assert m.completed and m.task_completion_time == pytest.approx(88.0)


def test_no_finish_means_incomplete():
    recs = [{"type": "tick", "t": 0.0, "x": 0.0, "y": 0.0, "v": 0.2}]
    m = metrics.compute_metrics(synthetic_log(recs))
    assert not m.completed and m.task_completion_time is None


def test_collision_episode_merging():
    recs = [{"type": "collision", "t": 5.0 + 0.01 * i, "indices": [3]} for i in range(12)]
    recs += [{"type": "collision", "t": 5.4, "indices": [4]}]    # gap 0.28 s: same episode
    recs += [{"type": "collision", "t": 7.0, "indices": [3]}]    # gap 1.6 s: new episode
    m = metrics.compute_metrics(synthetic_log(recs))
    assert m.collision_count == 2
    assert m.distinct_obstacles_hit == 2


def test_export_metrics_csv_roundtrip():
    header_only = metrics.export_metrics([])
    assert header_only.splitlines() == [metrics.CSV_HEADER]
    m = metrics.SessionMetrics(scenario="lap_seq", mode="sequential", seed=3,
                               completed=True, task_completion_time=86.4422,
                               collision_count=0, distinct_obstacles_hit=0,
                               max_lateral_error=0.0123456, path_entered_length=30.5911)
    text = metrics.export_metrics([m])
    row = text.splitlines()[1].split(",")
    assert row[0] == "lap_seq" and row[1] == "sequential" and row[2] == "3"
    assert row[3] == "true"
    assert float(row[4]) == pytest.approx(86.4422, abs=1e-3)
    assert float(row[6]) == pytest.approx(0.0123456, rel=1e-4)
