"""Command-line entry points.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime
failure (unreachable goal, corrupt input, ...).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

from . import io
from .meshnet import CopState, LogRecord, WireFormatError, cop_ingest
from .navigation import EpsSchedule, PlanningError, VehicleState, generate_primitives, plan_route
from .terrain import RoughnessParams, build_global_costmap

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_RUNTIME):
        super().__init__(msg)
        self.code = code


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    from .scenario import ConfigError, ScenarioError, load_config, run_scenario
    from .scenario.world import PlacementError

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as e:
        raise CliError(str(e), EXIT_CONFIG) from e
    say = (lambda m: None) if args.quiet else (lambda m: print(m, file=sys.stderr))
    t0 = time.perf_counter()
    try:
        res = run_scenario(cfg, _out_dir(args), log=say)
    except (ScenarioError, PlacementError) as e:
        raise CliError(str(e)) from e
    m, c = res.metrics, res.cop_metrics
    if not args.quiet:
        flag = " (vacuous: no objects or no tracks)" if m.vacuous else ""
        print(f"tracks: precision {m.precision:.3f} recall {m.recall:.3f} "
              f"error mean {m.geoloc_error_mean:.3f} m max {m.geoloc_error_max:.3f} m{flag}")
        print(f"cop: {c.cop_objects} objects, precision {c.precision:.3f} recall {c.recall:.3f} "
              f"consistency {c.cop_consistency:.3f}")
        print(f"latency mean {m.latency_mean:.3f} s max {m.latency_max:.3f} s; "
              f"wall time {time.perf_counter() - t0:.1f} s; outputs in {res.out_dir}")
    return EXIT_OK


def cmd_costmap(args) -> int:
    try:
        params = RoughnessParams(args.radius, args.threshold, args.min_points)
        if not args.cell_size > 0:
            raise ValueError("cell size must be positive")
    except ValueError as e:
        raise CliError(str(e), EXIT_CONFIG) from e
    try:
        cloud = io.read_xyz(args.cloud)
    except io.FormatError as e:
        raise CliError(str(e)) from e
    cm = build_global_costmap(cloud, params, args.cell_size)
    out = _out_dir(args)
    meta = {"radius": params.radius, "threshold": params.threshold, "min_points": params.min_points,
            "source": Path(args.cloud).name, "points": len(cloud)}
    io.write_costmap(out / "costmap.bin", cm, meta)
    io.write_roughness_csv(out / "roughness.csv", cm)
    n = cm.width * cm.height
    if not args.quiet:
        print(f"costmap {cm.width}x{cm.height} cells of {cm.cell_size:g} m: "
              f"{int(cm.navigable.sum())} navigable, {n - int(cm.known.sum())} unknown, "
              f"{int(cm.known.sum() - cm.navigable.sum())} too rough")
    return EXIT_OK


def _pair(text: str, n: int) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} values, got {text!r}")
    return vals


def cmd_plan(args) -> int:
    try:
        cm = io.read_costmap(args.costmap)
    except (OSError, io.FormatError) as e:
        raise CliError(f"cannot read cost-map: {e}", EXIT_CONFIG) from e
    try:
        sched = EpsSchedule(args.initial_eps, args.decrement, args.final_eps, None, args.max_expansions)
    except ValueError as e:
        raise CliError(str(e), EXIT_CONFIG) from e
    x, y, hdg = args.start
    prims = generate_primitives(args.min_turn_radius, cell_size=cm.cell_size)
    try:
        traj, legs = plan_route(VehicleState(x, y, math.radians(hdg)), args.waypoint, cm, sched, prims,
                                args.goal_tolerance)
    except PlanningError as e:
        raise CliError(f"planning failed: {e}") from e
    out = _out_dir(args)
    summary = [{"leg": k, "achieved_eps": r.achieved_eps, "expansions": r.expansions, "cost": r.cost}
               for k, r in enumerate(legs)]
    io.dump_json(out / "trajectory.geojson", {"type": "FeatureCollection", "features": [
        traj.to_geojson({"legs": summary, "length": traj.length})]})
    if not args.quiet:
        for s in summary:
            print(f"leg {s['leg']}: eps {s['achieved_eps']:g}, {s['expansions']} expansions, cost {s['cost']:.3f}")
        print(f"trajectory {traj.length:.1f} m, {len(traj)} points -> {out / 'trajectory.geojson'}")
    return EXIT_OK


def replay_log(path, merge_radius: float) -> tuple[CopState, int, Exception | None]:
    """Rebuild the COP from delivery records.

    Returns the state after the longest valid prefix, the number of records
    read, and the error that stopped the replay (if any).
    """
    cop = CopState()
    last_t = -math.inf
    k = -1
    with Path(path).open() as f:
        for k, line in enumerate(f):
            try:
                rec = LogRecord.from_json(json.loads(line))
            except (ValueError, KeyError, TypeError, WireFormatError) as e:
                return cop, k, CliError(f"corrupt record {k}: {e}")
            if rec.t < last_t:
                return cop, k, CliError(f"record {k}: timestamp {rec.t} precedes {last_t}")
            last_t = rec.t
            if rec.event == "deliver":
                cop_ingest(cop, rec.report, rec.t, merge_radius)
    return cop, k + 1, None


def cmd_replay(args) -> int:
    log = Path(args.log)
    if not log.is_file():
        raise CliError(f"delivery log not found: {log}", EXIT_CONFIG)
    radius = args.merge_radius
    meta = log.parent / "run_meta.json"
    if radius is None:
        radius = json.loads(meta.read_text())["merge_radius"] if meta.is_file() else 5.0
    cop, n, err = replay_log(log, radius)
    out = _out_dir(args)
    io.dump_json(out / "cop.geojson", cop.to_geojson())
    if err is not None:
        print(f"replayed {n} records before the error; partial COP written", file=sys.stderr)
        raise err
    if not args.quiet:
        print(f"replayed {n} records: {len(cop.objects)} COP objects -> {out / 'cop.geojson'}")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    path = run / "metrics.csv"
    if not path.is_file():
        raise CliError(f"no metrics.csv in {run}", EXIT_CONFIG)
    with path.open() as f:
        rows = list(csv.DictReader(f))
    meta = json.loads((run / "run_meta.json").read_text()) if (run / "run_meta.json").is_file() else {}
    keys = ["precision", "recall", "geoloc_error_mean", "geoloc_error_max", "latency_mean", "latency_max",
            "cop_objects", "cop_consistency", "vacuous"]
    print(f"{'metric':<20}" + "".join(f"{r['scope']:>14}" for r in rows))
    for k in keys:
        cells = []
        for r in rows:
            v = r[k]
            try:
                v = f"{float(v):.4f}" if "." in v or "e" in v else v
            except ValueError:
                pass
            cells.append(f"{v:>14}")
        print(f"{k:<20}" + "".join(cells))
    if "throughput" in meta:
        tp = meta["throughput"]
        print(f"pixel rate {tp['pixels_per_second'] / 1e6:.1f} MPix/s vs reference "
              f"{tp['reference_pixels_per_second'] / 1e6:.0f} ({100 * tp['relative_difference']:+.2f}%)")
    if "counts" in meta:
        print("counts: " + ", ".join(f"{k}={v}" for k, v in sorted(meta["counts"].items())))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoloc", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="out"):
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--quiet", action="store_true")

    r = sub.add_parser("run", help="simulate a scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None, help="derive every named seed from N")
    common(r, "runs/out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("costmap", help="build a global cost-map from an x y z cloud")
    c.add_argument("cloud")
    c.add_argument("--radius", type=float, default=1.5)
    c.add_argument("--threshold", type=float, default=0.15)
    c.add_argument("--min-points", type=int, default=10)
    c.add_argument("--cell-size", type=float, default=0.5)
    common(c)
    c.set_defaults(func=cmd_costmap)

    pl = sub.add_parser("plan", help="plan a route over a cost-map file")
    pl.add_argument("costmap")
    pl.add_argument("--start", type=lambda s: _pair(s, 3), required=True, help="x,y,heading_deg")
    pl.add_argument("--waypoint", type=lambda s: _pair(s, 2), action="append", required=True, help="x,y")
    pl.add_argument("--initial-eps", type=float, default=3.0)
    pl.add_argument("--decrement", type=float, default=0.5)
    pl.add_argument("--final-eps", type=float, default=1.0)
    pl.add_argument("--max-expansions", type=int, default=1_000_000)
    pl.add_argument("--min-turn-radius", type=float, default=4.0)
    pl.add_argument("--goal-tolerance", type=float, default=1.0)
    common(pl)
    pl.set_defaults(func=cmd_plan)

    rp = sub.add_parser("replay", help="rebuild the COP from a delivery log")
    rp.add_argument("log")
    rp.add_argument("--merge-radius", type=float, default=None)
    common(rp, "replay")
    rp.set_defaults(func=cmd_replay)

    rep = sub.add_parser("report", help="summarise a run directory")
    rep.add_argument("run_dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
