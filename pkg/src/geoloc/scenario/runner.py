"""Discrete-event orchestration of the whole robot team.

Event kinds at equal times run in the order control, lidar, capture,
release; ties inside a kind run in robot-id order. Every random draw is
keyed by a named seed plus (robot id, frame index), so outputs do not
depend on event interleaving.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import io
from ..fusion import Contact, DepthSource, contact_from_point, make_contact
from ..geometry import Pose, pixel_ray, ugv_pod, uav_pod
from ..meshnet import Link, LinkModel, MeshNetwork, TrackReport
from ..navigation import (
    Command,
    PlanningError,
    PlanResult,
    Trajectory,
    VehicleState,
    generate_primitives,
    plan_route,
    pure_pursuit,
    step_vehicle,
)
from ..terrain import (
    OCCUPIED,
    LocalElevationGrid,
    build_global_costmap,
    occupancy_costmap,
    overlay_local,
    update_local_grid,
)
from ..tracker import TrackDatabase, TrackStatus, lifecycle_step
from .config import RobotConfig, ScenarioConfig
from .pipeline import STAGES, pipeline_latency, throughput_check
from .scoring import RunMetrics, cop_consistency, score_fleet, score_tracks
from .sensing import simulate_detector, simulate_lidar, simulate_pose, simulate_stereo_cloud
from .world import World, gen_world

CONTROL, LIDAR, CAPTURE, RELEASE = range(4)
ESTOP_DISTANCE = 8.0  # m of path checked against the local occupancy map
REPLAN_PERIOD = 5.0  # s between replanning attempts while blocked


class ScenarioError(RuntimeError):
    pass


@dataclass
class Ugv:
    cfg: RobotConfig
    state: VehicleState
    traj: Trajectory
    legs: list[PlanResult]
    grid: LocalElevationGrid
    db: TrackDatabase
    cmd: Command = Command(0.0, 0.0)
    nearest: int = 0
    blocked: bool = False
    estops: int = 0
    replans: int = 0
    next_replan: float = 0.0
    waypoints: list = field(default_factory=list)  # waypoints of the current trajectory
    leg_end_s: list = field(default_factory=list)  # arclength at which each leg ends
    finished: bool = False
    last_release: float = 0.0
    report_count: dict = field(default_factory=dict)
    driven: list = field(default_factory=list)

    def advance(self, t: float) -> None:
        if t > self.state.time:
            self.state = step_vehicle(self.state, self.cmd, t - self.state.time)


@dataclass
class Uav:
    cfg: RobotConfig
    path: np.ndarray  # (n, 2) polyline: start then waypoints
    s: np.ndarray  # cumulative arclength
    altitude: float
    last_release: float = 0.0
    next_report: float = 0.0
    next_track_id: int = 1

    def position(self, t: float) -> tuple[np.ndarray, float]:
        d = min(self.cfg.speed * t, float(self.s[-1]))
        k = int(np.clip(np.searchsorted(self.s, d, side="right") - 1, 0, len(self.path) - 2))
        seg = self.path[k + 1] - self.path[k]
        L = float(np.hypot(*seg))
        xy = self.path[k] + (seg * (d - self.s[k]) / L if L > 0 else 0.0)
        yaw = math.atan2(seg[1], seg[0]) if L > 0 else math.radians(self.cfg.start[2])
        return np.array([xy[0], xy[1], self.altitude]), yaw


@dataclass
class RunResult:
    metrics: RunMetrics
    cop_metrics: RunMetrics
    out_dir: Path | None
    world: World
    files: list[str]


def _ugv_pose(world: World, st: VehicleState) -> Pose:
    return Pose(np.array([st.x, st.y, world.height_at(st.x, st.y)]), 0.0, 0.0, st.heading, st.time)


def _report(rid: int, tr, t: float, payload: int) -> TrackReport:
    return TrackReport(rid, tr.track_id, tr.class_label, tuple(tr.mean_utm), tuple(np.diag(tr.covariance)),
                       tr.confidence, t, payload)


def run_scenario(cfg: ScenarioConfig, out_dir=None, log=None) -> RunResult:
    """Simulate the scenario; writes artifacts to ``out_dir`` when given."""
    say = log or (lambda msg: None)
    seeds = cfg.seeds
    world = gen_world(seeds.world, cfg.world)
    ex, ey = world.extent
    say(f"world {ex:g} x {ey:g} m, {len(world.objects)} objects")

    tc = cfg.terrain
    nx, ny = int(round(ex / tc.cell_size)), int(round(ey / tc.cell_size))
    costmap = build_global_costmap(world.airborne_cloud(tc.survey_spacing), tc.roughness(), tc.cell_size,
                                   origin=(0.0, 0.0), shape=(ny, nx))
    pc = cfg.planner
    prims = generate_primitives(pc.min_turn_radius, pc.arc_length, pc.headings, tc.cell_size)
    ugv_p, uav_p = ugv_pod(), uav_pod()

    ugvs: dict[int, Ugv] = {}
    uavs: dict[int, Uav] = {}
    for rc in sorted(cfg.robots, key=lambda r: r.id):
        if rc.kind == "ugv":
            st = VehicleState(rc.start[0], rc.start[1], math.radians(rc.start[2]))
            try:
                traj, legs = plan_route(st, rc.waypoints, costmap, pc.schedule(), prims, pc.goal_tolerance)
            except Exception as e:
                raise ScenarioError(f"robot {rc.id}: route planning failed: {e}") from e
            say(f"robot {rc.id}: route {traj.length:.1f} m, eps {[r.achieved_eps for r in legs]}")
            grid = LocalElevationGrid(tc.cell_size, tc.local_cells, clearance=tc.clearance,
                                      center_utm=(rc.start[0], rc.start[1]))
            ugvs[rc.id] = Ugv(rc, st, traj, legs, grid, TrackDatabase(cfg.tracker.lifecycle()),
                              waypoints=list(rc.waypoints),
                              leg_end_s=list(np.cumsum([r.trajectory.length for r in legs])))
        else:
            path = np.array([rc.start[:2], *rc.waypoints], dtype=float)
            s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(path, axis=0).T))])
            alt = world.height_at(rc.start[0], rc.start[1]) + rc.altitude
            uavs[rc.id] = Uav(rc, path, s, alt)

    nm = cfg.network
    links = {f"robot{rid}": Link(LinkModel(nm.latency_base, nm.latency_jitter, nm.loss_prob, nm.bandwidth,
                                           seeds.network * 1000 + rid), f"robot{rid}")
             for rid in sorted([*ugvs, *uavs])}
    net = MeshNetwork(links, merge_radius=nm.merge_radius)

    queue: list = []
    seq = 0

    def push(t, kind, rid, payload=None):
        nonlocal seq
        heapq.heappush(queue, (t, kind, rid, seq, payload))
        seq += 1

    T = cfg.duration
    n_ctrl = int(math.floor(T * pc.control_rate + 1e-9))
    n_cap = int(math.floor(T * cfg.sensing.capture_rate + 1e-9))
    n_lidar = int(math.floor(T * tc.lidar_rate + 1e-9)) if tc.lidar_rate > 0 else -1
    for rid in ugvs:
        push(0.0, CONTROL, rid, 0)
        if n_lidar >= 0:
            push(0.0, LIDAR, rid, 0)
    for rid in sorted([*ugvs, *uavs]):
        push(0.0, CAPTURE, rid, 0)

    track_log, latency_rows = [], []
    counts = {"captures": 0, "detections": 0, "contacts": 0, "reports_sent": 0}
    sm = cfg.sensing

    while queue:
        t, kind, rid, _, payload = heapq.heappop(queue)
        if t > T:
            break
        net.advance_to(t)

        if kind == CONTROL:
            a = ugvs[rid]
            a.advance(t)
            if payload % max(1, int(round(pc.control_rate / 5))) == 0:
                a.driven.append((a.state.x, a.state.y))
            if a.finished or a.blocked:
                a.cmd = Command(0.0, 0.0, a.finished, a.nearest)
            else:
                cmd = pure_pursuit(a.state, a.traj, pc.lookahead, a.cfg.speed, pc.min_turn_radius,
                                   search_from=a.nearest, search_window=3.0 * pc.lookahead)
                a.nearest = cmd.nearest_index
                a.finished = cmd.finished
                a.cmd = cmd
            if payload + 1 <= n_ctrl:
                push((payload + 1) / pc.control_rate, CONTROL, rid, payload + 1)

        elif kind == LIDAR:
            a = ugvs[rid]
            a.advance(t)
            pose = _ugv_pose(world, a.state)
            scan = simulate_lidar(pose, world, [seeds.sensing, rid, payload, 3], tc.lidar_range)
            update_local_grid(a.grid, scan, pose, tc.lidar_range, tc.voxel_size)
            was = a.blocked
            a.blocked = _path_blocked(a, occupancy_costmap(a.grid, tc.obstacle_threshold))
            if a.blocked and not was:
                a.estops += 1
                track_log.append({"t": t, "robot": rid, "event": "estop", "track": None})
            if a.blocked and pc.replan_on_block and t >= a.next_replan:
                a.next_replan = t + REPLAN_PERIOD
                ok = _replan(a, overlay_local(costmap, a.grid, tc.obstacle_threshold), pc, prims)
                track_log.append({"t": t, "robot": rid, "event": "replan" if ok else "replan_failed",
                                  "track": None})
                if ok:
                    a.blocked = _path_blocked(a, occupancy_costmap(a.grid, tc.obstacle_threshold))
            if payload + 1 <= n_lidar:
                push((payload + 1) / tc.lidar_rate, LIDAR, rid, payload + 1)

        elif kind == CAPTURE:
            counts["captures"] += 1
            stages, e2e = pipeline_latency(cfg.pipeline, seeds.pipeline * 1000 + rid, payload)
            key = [seeds.sensing, rid, payload]
            if rid in ugvs:
                a = ugvs[rid]
                a.advance(t)
                true_pose = _ugv_pose(world, a.state)
                meas = simulate_pose(true_pose, sm, key + [0])
                dets = simulate_detector(true_pose, ugv_p, world, sm, key + [1], t)
                contacts = []
                if dets:
                    clouds = simulate_stereo_cloud(true_pose, ugv_p, world, sm, key + [2])
                    for d in dets:
                        m = d.module_index
                        contacts.append(make_contact(d, clouds[m], ugv_p.intrinsics(m), ugv_p.extrinsics(m),
                                                     meas, cfg.fusion_policy, cfg.fusion_covariance, rid))
            else:
                u = uavs[rid]
                pos, yaw = u.position(t)
                true_pose = Pose(pos, 0.0, 0.0, yaw, t)
                meas = simulate_pose(true_pose, sm, key + [0])
                dets = simulate_detector(true_pose, uav_p, world, sm, key + [1], t, anchor="base")
                contacts = _uav_contacts(dets, uav_p, meas, world, cfg, rid)
            counts["detections"] += len(dets)
            counts["contacts"] += len(contacts)
            agent = ugvs.get(rid) or uavs[rid]
            t_rel = max(t + e2e, agent.last_release)
            agent.last_release = t_rel
            latency_rows.append([rid, payload, t] + [stages[s] for s in STAGES] + [e2e, t_rel, len(contacts)])
            push(t_rel, RELEASE, rid, (t, contacts))
            if payload + 1 <= n_cap:
                push((payload + 1) / sm.capture_rate, CAPTURE, rid, payload + 1)

        elif kind == RELEASE:
            t_cap, contacts = payload
            if rid in ugvs:
                a = ugvs[rid]
                a.db, events = lifecycle_step(a.db, contacts, t)
                confirmed_now = {e.track_id for e in events if e.kind == "confirm"}
                to_report = []
                for e in events:
                    track_log.append({"t": e.time, "t_ingest": t, "robot": rid, "event": e.kind,
                                      "track": e.track_id})
                    tr = a.db.tracks[e.track_id]
                    if e.kind == "confirm":
                        to_report.append(tr.track_id)
                    elif (e.kind == "update" and tr.status is TrackStatus.CONFIRMED
                          and e.track_id not in confirmed_now):
                        n = a.report_count.get(e.track_id, 0) + 1
                        a.report_count[e.track_id] = n
                        if n % cfg.tracker.report_every == 0:
                            to_report.append(tr.track_id)
                for tid in dict.fromkeys(to_report):
                    net.send(f"robot{rid}", _report(rid, a.db.tracks[tid], t, nm.payload_bytes), t)
                    counts["reports_sent"] += 1
            else:
                u = uavs[rid]
                if contacts and t_cap >= u.next_report - 1e-9:
                    for c in contacts:
                        rep = TrackReport(rid, u.next_track_id, c.class_label, tuple(c.position_utm),
                                          tuple(np.diag(c.covariance_utm)), c.confidence, t, nm.payload_bytes)
                        u.next_track_id += 1
                        net.send(f"robot{rid}", rep, t)
                        counts["reports_sent"] += 1
                    u.next_report = t_cap + u.cfg.report_period

    net.advance_to(T)
    for a in ugvs.values():
        a.advance(T)
        a.db, events = lifecycle_step(a.db, [], T)
        track_log.extend({"t": e.time, "t_ingest": T, "robot": a.cfg.id, "event": e.kind, "track": e.track_id}
                         for e in events)

    objects = world.objects
    mr = cfg.scoring.match_radius
    metrics = score_fleet([a.db.confirmed() for a in ugvs.values()], objects, mr)
    cop_m = score_tracks(net.cop, objects, mr)
    cons = cop_consistency(net.cop, objects, mr)
    e2e_all = np.array([r[3 + len(STAGES)] for r in latency_rows]) if latency_rows else np.zeros(1)
    for m in (metrics, cop_m):
        m.latency_mean = float(e2e_all.mean())
        m.latency_max = float(e2e_all.max())
        m.cop_objects = len(net.cop.objects)
        m.cop_consistency = cons

    files: list[str] = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = _write_outputs(out, cfg, world, ugvs, uavs, net, metrics, cop_m, track_log, latency_rows,
                               counts, costmap)
    return RunResult(metrics, cop_m, Path(out_dir) if out_dir is not None else None, world, files)


def _replan(a: Ugv, costmap, pc, prims) -> bool:
    """Plan from the current state through the waypoints not yet reached."""
    s_now = a.traj.s[a.nearest]
    remaining = [w for w, s_end in zip(a.waypoints, a.leg_end_s) if s_end > s_now]
    if not remaining:
        return False
    try:
        traj, legs = plan_route(a.state, remaining, costmap, pc.schedule(), prims, pc.goal_tolerance)
    except PlanningError:
        return False
    a.traj, a.nearest, a.replans = traj, 0, a.replans + 1
    a.legs = a.legs + legs
    a.waypoints = remaining
    a.leg_end_s = list(np.cumsum([r.trajectory.length for r in legs]))
    return True


def _path_blocked(a: Ugv, occ: np.ndarray) -> bool:
    traj = a.traj
    i0 = a.nearest
    i1 = int(np.searchsorted(traj.s, traj.s[i0] + ESTOP_DISTANCE, side="right"))
    for x, y in traj.points[i0:i1, :2]:
        ij = a.grid.cell_index(x, y)
        if ij is not None and occ[ij[1], ij[0]] == OCCUPIED:
            return True
    return False


def _uav_contacts(dets, pod, pose: Pose, world: World, cfg: ScenarioConfig, rid: int) -> list[Contact]:
    out = []
    for d in dets:
        extr, intr = pod.extrinsics(d.module_index), pod.intrinsics(d.module_index)
        origin = pose.to_global(extr.translation)
        direction = pose.rotation @ extr.rotation @ pixel_ray(d.center, intr)
        hit = world.intersect_ray(origin, direction, max_range=2.0 * cfg.sensing.max_range)
        if hit is None:
            continue
        out.append(contact_from_point(hit, origin, d.class_label, cfg.fusion_covariance,
                                      confidence=d.confidence, source_robot=rid, timestamp=d.timestamp,
                                      depth_source=DepthSource.TERRAIN_RAY))
    return out


def _tracks_geojson(ugvs: dict[int, Ugv]) -> dict:
    feats = []
    for rid in sorted(ugvs):
        for tid, tr in sorted(ugvs[rid].db.tracks.items()):
            x, y, z = (float(v) for v in tr.mean_utm)
            feats.append({"type": "Feature", "geometry": {"type": "Point", "coordinates": [x, y]}, "properties": {
                "robot_id": rid, "track_id": tid, "class": tr.class_label.name.lower(),
                "status": tr.status.value, "altitude": z, "n_updates": tr.n_updates,
                "confidence": tr.confidence, "last_update": tr.last_update,
                "covariance_diag": [float(v) for v in np.diag(tr.covariance)]}})
    return {"type": "FeatureCollection", "features": feats}


def _route_geojson(ugvs: dict[int, Ugv], uavs: dict[int, Uav]) -> dict:
    feats = []
    for rid in sorted(ugvs):
        a = ugvs[rid]
        feats.append(a.traj.to_geojson({"robot_id": rid, "kind": "planned"}))
        feats.append({"type": "Feature", "geometry": {"type": "LineString",
                                                      "coordinates": [[float(x), float(y)] for x, y in a.driven]},
                      "properties": {"robot_id": rid, "kind": "driven"}})
    for rid in sorted(uavs):
        feats.append({"type": "Feature", "geometry": {"type": "LineString",
                                                      "coordinates": uavs[rid].path.tolist()},
                      "properties": {"robot_id": rid, "kind": "uav_waypoints"}})
    return {"type": "FeatureCollection", "features": feats}


def _write_outputs(out: Path, cfg, world, ugvs, uavs, net, metrics, cop_m, track_log, latency_rows, counts,
                   costmap) -> list[str]:
    fields = list(RunMetrics().as_dict())
    io.write_csv(out / "metrics.csv", ["scope"] + fields,
                 [["tracks"] + [metrics.as_dict()[k] for k in fields],
                  ["cop"] + [cop_m.as_dict()[k] for k in fields]])
    io.dump_json(out / "tracks.geojson", _tracks_geojson(ugvs))
    io.dump_json(out / "cop.geojson", net.cop.to_geojson())
    io.write_csv(out / "latency.csv", ["robot", "frame", "t_capture", *STAGES, "end_to_end", "t_release",
                                       "contacts"], latency_rows)
    io.dump_json(out / "route.geojson", _route_geojson(ugvs, uavs))
    io.write_jsonl(out / "track_log.jsonl", track_log)
    io.write_jsonl(out / "delivery_log.jsonl", (r.to_json() for r in net.log))
    io.write_jsonl(out / "cop_log.jsonl", ({"t": t, "objects": snap} for t, snap in net.timeline))
    n_send = sum(r.event == "send" for r in net.log)
    n_drop = sum(r.event == "drop" for r in net.log)
    n_del = sum(r.event == "deliver" for r in net.log)
    robots = {}
    for rid, a in sorted(ugvs.items()):
        robots[str(rid)] = {
            "kind": "ugv", "final_pose": [a.state.x, a.state.y, a.state.heading], "finished": a.finished,
            "estops": a.estops, "replans": a.replans, "route_length": a.traj.length,
            "legs": [{"achieved_eps": r.achieved_eps, "expansions": r.expansions, "cost": r.cost,
                      "solutions": [list(s) for s in r.solutions]} for r in a.legs],
            "tracks_confirmed": len(a.db.confirmed()), "tracks_total": len(a.db.tracks)}
    for rid, u in sorted(uavs.items()):
        pos, _ = u.position(cfg.duration)
        robots[str(rid)] = {"kind": "uav", "final_position": [float(v) for v in pos],
                            "contacts_reported": u.next_track_id - 1}
    meta = {
        "name": cfg.name, "duration": cfg.duration, "seeds": asdict(cfg.seeds),
        "merge_radius": cfg.network.merge_radius,
        "throughput": throughput_check(ugv_pod(), cfg.sensing.capture_rate).as_dict(),
        "objects": [{"class": o.class_label.name.lower(), "position_utm": [float(v) for v in o.position_utm]}
                    for o in world.objects],
        "costmap": {"width": costmap.width, "height": costmap.height, "cell_size": costmap.cell_size,
                    "navigable_cells": int(costmap.navigable.sum())},
        "robots": robots,
        "counts": {**counts, "messages_sent": n_send, "messages_dropped": n_drop, "messages_delivered": n_del},
        "vacuous_scores": bool(metrics.vacuous),
        "config": cfg.raw,
    }
    io.dump_json(out / "run_meta.json", meta)
    return ["metrics.csv", "tracks.geojson", "cop.geojson", "latency.csv", "run_meta.json", "route.geojson",
            "track_log.jsonl", "delivery_log.jsonl", "cop_log.jsonl"]
