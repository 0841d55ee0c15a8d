"""Teleoperated miniature-vehicle stack.

Library layers, bottom up: path math (``path_core``), the kinematic
single-track model (``vehicle``), path tracking and command mapping
(``controller``), the premapped world (``world``/``maps``), the lossy wire
protocol (``link``), and the deterministic session host with scripted
operators and KPIs (``sim_server``, ``bots``, ``metrics``). ``cli`` exposes
the ``telepath`` command; ``report`` renders run figures.
"""

from .controller import (
    Mode,
    Pedal,
    SpeedSetpoint,
    VelocityEvent,
    direct_command,
    longitudinal_accel,
    pure_pursuit_steering,
    simulate_tracking,
    update_setpoint,
)
from .link import Channel, LinkConfig, Message, decode, encode, liveness, on_disconnect
from .maps import default_map, make_stadium_map
from .metrics import SessionMetrics, compute_metrics, export_metrics
from .path_core import (
    DS_SAMPLE,
    MIN_SPACING,
    FeasibilityReport,
    PathSpline,
    Waypoint,
    append_waypoint,
    build_spline,
    check_feasibility,
    delete_last_waypoint,
    move_waypoint,
    offset_boundaries,
    project,
)
from .sim_server import Scenario, Session, SessionLog, make_scenario, run, scenario_from_file
from .vehicle import ControlInput, VehicleParams, VehicleState, footprint, step
from .world import Obstacle, WorldMap, clearance, collides, crossed_finish, load_map, save_map

__version__ = "0.1.0"
