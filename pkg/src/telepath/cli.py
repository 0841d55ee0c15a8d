"""The ``telepath`` command: host sessions, run the KPI harness, replay logs.

``run`` hosts one session from a scenario file, optionally exposing the wire
protocol to external operator UIs (WebSocket and/or raw TCP) and serving the
browser station's static bundle. ``compare`` runs the two scripted fleets
and writes the KPI CSV plus figures. ``replay`` recomputes metrics from a
recorded log.
"""

from __future__ import annotations

import argparse
import http.server
import sys
import threading
from pathlib import Path

from . import compare as compare_mod
from . import metrics as metrics_mod
from . import report, sim_server
from .link import LinkConfig
from .sim_server import ScenarioError, SessionLog


def _cmd_run(args) -> int:
    clock = "realtime" if (args.realtime or args.listen or args.listen_tcp) else None
    scenario = sim_server.scenario_from_file(args.scenario, seed=args.seed, clock=clock)

    transport = None
    servers = []
    if args.listen or args.listen_tcp:
        from .transport import MultiTransport, TcpFrameServer, WebSocketFrameServer

        if scenario.operator != "external":
            print("error: --listen/--listen-tcp need an 'external' operator scenario",
                  file=sys.stderr)
            return 2
        if args.listen:
            ws = WebSocketFrameServer(args.listen)
            servers.append(ws)
            print(f"operator link: ws://localhost:{args.listen}")
        if args.listen_tcp:
            tcp = TcpFrameServer(args.listen_tcp)
            servers.append(tcp)
            print(f"operator link: tcp://localhost:{tcp.port}")
        transport = MultiTransport(*servers)
    elif scenario.operator == "external":
        print("error: scenario wants an external operator; pass --listen PORT",
              file=sys.stderr)
        return 2

    httpd = None
    if args.serve_ui:
        ui_dir = Path(args.ui_dir) if args.ui_dir else Path("frontend") / "dist"
        if not ui_dir.is_dir():
            print(f"error: UI bundle directory {ui_dir} not found "
                  f"(build it with `npm run build` in frontend/)", file=sys.stderr)
            return 2
        handler = lambda *a, **kw: http.server.SimpleHTTPRequestHandler(
            *a, directory=str(ui_dir), **kw)
        httpd = http.server.ThreadingHTTPServer(("0.0.0.0", args.serve_ui), handler)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        print(f"operator station: http://localhost:{args.serve_ui}/")

    print(f"running scenario '{scenario.name}' (mode {scenario.mode}, "
          f"operator {scenario.operator}, seed {scenario.seed}, {scenario.clock} clock)")
    try:
        log = sim_server.run(scenario, transport=transport)
    finally:
        for server in servers:
            server.close()
        if httpd is not None:
            httpd.shutdown()

    if args.log:
        Path(args.log).write_bytes(log.to_ndjson())
        print(f"log written to {args.log}")
    m = metrics_mod.compute_metrics(log)
    if args.metrics:
        Path(args.metrics).write_text(metrics_mod.export_metrics([m]))
        print(f"metrics written to {args.metrics}")
    _print_metrics(m)
    return 0


def _print_metrics(m) -> None:
    completion = f"{m.task_completion_time:.2f} s" if m.completed else "not completed"
    print(f"  completion: {completion}  collisions: {m.collision_count}  "
          f"max lateral error: {m.max_lateral_error:.3f} m  "
          f"path entered: {m.path_entered_length:.2f} m")


def _cmd_compare(args) -> int:
    world = sim_server.resolve_map(args.map)
    link_cfg = LinkConfig(latency=args.latency, jitter=args.jitter, loss_rate=args.loss)
    result = compare_mod.compare_fleets(world, runs=args.runs, base_seed=args.seed,
                                        link_cfg=link_cfg, map_ref=args.map)
    csv_text = metrics_mod.export_metrics(result["rows"])
    out = Path(args.out)
    out.write_text(csv_text)
    print(f"fleet CSV written to {out}")
    for fleet, summary in result["summaries"].items():
        med = summary["median_completion_s"]
        med_text = f"{med:.2f} s" if med is not None else "n/a"
        print(f"  {fleet}: {summary['completed']}/{summary['runs']} laps, "
              f"median {med_text}, collisions {summary['total_collisions']}")

    if not args.no_figures:
        fig_dir = Path(args.figures) if args.figures else out.parent
        fig_dir.mkdir(parents=True, exist_ok=True)
        fig = report.completion_time_figure(result["rows"], fig_dir / "completion_times.png")
        print(f"figure written to {fig}")
        for fleet, log in result["sample_logs"].items():
            fig = report.trajectory_figure(log, fig_dir / f"trajectory_{fleet}.png")
            print(f"figure written to {fig}")
    return 0


def _cmd_replay(args) -> int:
    log = SessionLog.from_ndjson(Path(args.log).read_bytes())
    m = metrics_mod.compute_metrics(log)
    print(f"replayed '{log.scenario.get('name', '?')}' "
          f"(mode {log.scenario.get('mode')}, seed {log.scenario.get('seed')})")
    _print_metrics(m)
    if args.metrics:
        Path(args.metrics).write_text(metrics_mod.export_metrics([m]))
        print(f"metrics written to {args.metrics}")
    if args.figure:
        fig = report.trajectory_figure(log, args.figure)
        print(f"figure written to {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telepath",
                                     description="teleoperated miniature-vehicle stack")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="host one session from a scenario file")
    p_run.add_argument("--scenario", required=True, help="telepath-scenario/1 JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--realtime", action="store_true", help="pace against the wall clock")
    p_run.add_argument("--listen", type=int, metavar="PORT",
                       help="WebSocket port for external operator UIs")
    p_run.add_argument("--listen-tcp", type=int, metavar="PORT",
                       help="raw TCP frame port for native clients")
    p_run.add_argument("--serve-ui", type=int, metavar="PORT",
                       help="serve the browser operator station bundle")
    p_run.add_argument("--ui-dir", help="UI bundle directory (default frontend/dist)")
    p_run.add_argument("--log", help="write the session log (NDJSON)")
    p_run.add_argument("--metrics", help="write session metrics CSV")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run the two scripted fleets and export KPIs")
    p_cmp.add_argument("--map", default="default", help="map file or 'default'")
    p_cmp.add_argument("--runs", type=int, default=7, help="runs per fleet")
    p_cmp.add_argument("--seed", type=int, default=1, help="base seed")
    p_cmp.add_argument("--latency", type=float, default=0.05)
    p_cmp.add_argument("--jitter", type=float, default=0.01)
    p_cmp.add_argument("--loss", type=float, default=0.01)
    p_cmp.add_argument("--out", default="compare.csv", help="CSV output path")
    p_cmp.add_argument("--figures", help="figure directory (default: next to the CSV)")
    p_cmp.add_argument("--no-figures", action="store_true")
    p_cmp.set_defaults(func=_cmd_compare)

    p_rep = sub.add_parser("replay", help="recompute metrics from a session log")
    p_rep.add_argument("--log", required=True, help="NDJSON session log")
    p_rep.add_argument("--metrics", help="write metrics CSV")
    p_rep.add_argument("--figure", help="write a trajectory figure (PNG)")
    p_rep.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("\ninterrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
