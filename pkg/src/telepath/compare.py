"""Two-fleet KPI harness: scripted direct laps versus sequential laps.

Runs both bots over the same map for a batch of seeds, mirroring the study
procedure of driving one lap per trial and collecting task completion time
and collisions. Lap-time medians let the modes be ordered; the underlying
human study is not reproducible, only its qualitative ordering.
"""

from __future__ import annotations

from typing import Optional

from .link import LinkConfig
from .metrics import SessionMetrics, compute_metrics, fleet_summary
from .sim_server import make_scenario, run
from .world import WorldMap

# Default comparison link: a mildly imperfect network so seeds matter.
COMPARE_LINK = LinkConfig(latency=0.05, jitter=0.01, loss_rate=0.01)

FLEETS = (("bot_direct", "direct"), ("bot_sequential", "sequential"))


def run_fleet(world: WorldMap, operator: str, mode: str, runs: int = 7,
              base_seed: int = 1, link_cfg: Optional[LinkConfig] = None,
              map_ref: str = "inline") -> tuple[list[SessionMetrics], object]:
    """One fleet of runs; returns (metrics rows, log of the first run)."""
    link_cfg = link_cfg or COMPARE_LINK
    out = []
    first_log = None
    for seed in range(base_seed, base_seed + runs):
        scenario = make_scenario(world, name=operator, map_ref=map_ref, mode=mode,
                                 operator=operator, seed=seed, link_cfg=link_cfg)
        log = run(scenario)
        if first_log is None:
            first_log = log
        out.append(compute_metrics(log))
    return out, first_log


def compare_fleets(world: WorldMap, runs: int = 7, base_seed: int = 1,
                   link_cfg: Optional[LinkConfig] = None,
                   map_ref: str = "inline") -> dict:
    """Run both fleets; returns metrics rows, summaries and one sample log each."""
    rows: list[SessionMetrics] = []
    summaries = {}
    sample_logs = {}
    for operator, mode in FLEETS:
        fleet, first_log = run_fleet(world, operator, mode, runs=runs,
                                     base_seed=base_seed, link_cfg=link_cfg,
                                     map_ref=map_ref)
        rows.extend(fleet)
        summaries[operator] = fleet_summary(fleet)
        sample_logs[operator] = first_log
    return {"rows": rows, "summaries": summaries, "sample_logs": sample_logs}
