"""Scenario configuration: one YAML document, validated in full before use.

Top-level sections: ``name``, ``duration``, ``seeds``, ``world``, ``robots``,
``sensing``, ``fusion``, ``tracker``, ``terrain``, ``planner``, ``network``,
``pipeline``, ``scoring``. See ``configs/demo.yaml`` for every key.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..fusion import ClassLabel, CovarianceParams, DepthPolicy
from ..navigation import EpsSchedule
from ..terrain import RoughnessParams
from ..tracker import LifecycleParams
from .pipeline import STAGES, PipelineModel
from .sensing import SensingModel
from .world import RoughPatch, WorldSpec


class ConfigError(ValueError):
    def __init__(self, errors: list[str], path=None):
        self.errors = list(errors)
        self.path = path
        head = f"invalid config {path}" if path else "invalid config"
        super().__init__(head + ":\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Seeds:
    world: int = 1
    sensing: int = 2
    network: int = 3
    pipeline: int = 4


@dataclass(frozen=True)
class RobotConfig:
    id: int
    kind: str  # ugv | uav
    start: tuple[float, float, float]  # x, y, heading (deg)
    waypoints: tuple[tuple[float, float], ...]
    altitude: float = 60.0  # uav only, above the start terrain
    speed: float = 3.0
    report_period: float = 1.0  # uav only: seconds between contact uploads


@dataclass(frozen=True)
class TrackerConfig:
    n_confirm: int = 3
    max_gap: float = 30.0
    death_timeout: float = 120.0
    gate_threshold: float = 14.16
    report_every: int = 1

    def lifecycle(self) -> LifecycleParams:
        return LifecycleParams(self.n_confirm, self.max_gap, self.death_timeout, self.gate_threshold)


@dataclass(frozen=True)
class TerrainConfig:
    radius: float = 1.5
    threshold: float = 0.15
    min_points: int = 10
    cell_size: float = 0.5
    survey_spacing: float = 0.5
    lidar_rate: float = 5.0
    lidar_range: float = 50.0
    voxel_size: float = 0.2
    local_cells: int = 80
    clearance: float = 0.3
    obstacle_threshold: float = 0.15

    def roughness(self) -> RoughnessParams:
        return RoughnessParams(self.radius, self.threshold, self.min_points)


@dataclass(frozen=True)
class PlannerConfig:
    initial_eps: float = 3.0
    decrement: float = 0.5
    final_eps: float = 1.0
    max_expansions: int = 400_000
    min_turn_radius: float = 4.0
    arc_length: float = 2.0
    headings: int = 16
    goal_tolerance: float = 1.0
    lookahead: float = 8.0
    speed: float = 3.0
    control_rate: float = 50.0
    replan_on_block: bool = False  # default: emergency stop only

    def schedule(self) -> EpsSchedule:
        return EpsSchedule(self.initial_eps, self.decrement, self.final_eps, None, self.max_expansions)


@dataclass(frozen=True)
class NetworkConfig:
    latency_base: float = 0.05
    latency_jitter: float = 0.02
    loss_prob: float = 0.0
    bandwidth: float = 1.0e6
    payload_bytes: int = 64 * 1024
    merge_radius: float = 5.0


@dataclass(frozen=True)
class ScoringConfig:
    match_radius: float = 5.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    duration: float = 60.0
    seeds: Seeds = field(default_factory=Seeds)
    world: WorldSpec = field(default_factory=WorldSpec)
    robots: tuple[RobotConfig, ...] = ()
    sensing: SensingModel = field(default_factory=SensingModel)
    fusion_policy: DepthPolicy = field(default_factory=DepthPolicy)
    fusion_covariance: CovarianceParams = field(default_factory=CovarianceParams)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    pipeline: PipelineModel = field(default_factory=PipelineModel)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def with_seed(self, seed: int) -> ScenarioConfig:
        """Derive every named seed from one override value."""
        seeds = Seeds(world=seed, sensing=seed + 1, network=seed + 2, pipeline=seed + 3)
        raw = dict(self.raw)
        raw["seeds"] = dataclasses.asdict(seeds)
        return dataclasses.replace(self, seeds=seeds, raw=raw)


_SECTIONS = {"name", "duration", "seeds", "world", "robots", "sensing", "fusion", "tracker",
             "terrain", "planner", "network", "pipeline", "scoring"}


def _build(cls, data, section: str, errors: list[str], convert=None):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{section}: expected a mapping")
        return None
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in data.items():
        if k not in names:
            errors.append(f"{section}.{k}: unknown key")
            continue
        kwargs[k] = convert(k, v) if convert else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        errors.append(f"{section}: {e}")
        return None


def _num(section, errors, flags=()):
    def conv(k, v):
        if k in flags:
            if not isinstance(v, bool):
                errors.append(f"{section}.{k}: expected true or false, got {v!r}")
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            errors.append(f"{section}.{k}: expected a number, got {v!r}")
        return v
    return conv


def parse_config(data: dict, path=None) -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"], path)
    for k in data:
        if k not in _SECTIONS:
            errors.append(f"{k}: unknown section")

    duration = data.get("duration", 60.0)
    if isinstance(duration, bool) or not isinstance(duration, (int, float)) or not duration > 0:
        errors.append(f"duration: must be a positive number, got {duration!r}")
        duration = 60.0

    seeds = _build(Seeds, data.get("seeds"), "seeds", errors)
    if seeds is not None:
        for f in dataclasses.fields(seeds):
            v = getattr(seeds, f.name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                errors.append(f"seeds.{f.name}: must be a non-negative integer")

    world = _parse_world(data.get("world"), errors)
    robots = _parse_robots(data.get("robots"), errors, world)

    s = dict(data.get("sensing") or {})
    if "pose_sigma_heading_deg" in s:
        s["pose_sigma_heading"] = math.radians(float(s.pop("pose_sigma_heading_deg")))
    if "p_detect" in s:
        try:
            s["p_detect_knots"] = tuple((float(r), float(p)) for r, p in s.pop("p_detect"))
        except (TypeError, ValueError):
            errors.append("sensing.p_detect: expected a list of [range, probability] pairs")
            s.pop("p_detect", None)
    sensing = _build(SensingModel, s, "sensing", errors)

    fz = dict(data.get("fusion") or {})
    cov_keys = {"k_range", "k_bearing"}
    policy = _build(DepthPolicy, {k: v for k, v in fz.items() if k not in cov_keys}, "fusion", errors)
    cov = _build(CovarianceParams, {k: v for k, v in fz.items() if k in cov_keys}, "fusion", errors)

    tracker = _build(TrackerConfig, data.get("tracker"), "tracker", errors, _num("tracker", errors))
    if tracker is not None:
        try:
            tracker.lifecycle()
        except ValueError as e:
            errors.append(f"tracker: {e}")
        if tracker.report_every < 1:
            errors.append("tracker.report_every: must be >= 1")
    terrain = _build(TerrainConfig, data.get("terrain"), "terrain", errors, _num("terrain", errors))
    if terrain is not None:
        try:
            terrain.roughness()
        except ValueError as e:
            errors.append(f"terrain: {e}")
    planner = _build(PlannerConfig, data.get("planner"), "planner", errors,
                     _num("planner", errors, flags=("replan_on_block",)))
    if planner is not None:
        try:
            planner.schedule()
        except ValueError as e:
            errors.append(f"planner: {e}")
        if planner.lookahead <= 0 or planner.speed <= 0 or planner.control_rate <= 0:
            errors.append("planner: lookahead, speed and control_rate must be positive")
        if terrain is not None and planner.goal_tolerance < terrain.cell_size:
            errors.append("planner.goal_tolerance: must be at least terrain.cell_size")
    network = _build(NetworkConfig, data.get("network"), "network", errors, _num("network", errors))
    if network is not None:
        if not 0.0 <= network.loss_prob <= 1.0:
            errors.append("network.loss_prob: must lie in [0, 1]")
        if network.bandwidth <= 0 or network.payload_bytes <= 0:
            errors.append("network: bandwidth and payload_bytes must be positive")
        if network.latency_base < 0 or network.latency_jitter < 0:
            errors.append("network: latencies must be non-negative")

    pipe_raw = data.get("pipeline") or {}
    pipeline = None
    if not isinstance(pipe_raw, dict):
        errors.append("pipeline: expected a mapping of stage -> [mean, jitter]")
    else:
        stages = {}
        for k, v in pipe_raw.items():
            if k not in STAGES:
                errors.append(f"pipeline.{k}: unknown stage")
                continue
            try:
                mean, jit = (float(x) for x in v)
                stages[k] = (mean, jit)
            except (TypeError, ValueError):
                errors.append(f"pipeline.{k}: expected [mean, jitter]")
        try:
            pipeline = PipelineModel(stages)
        except ValueError as e:
            errors.append(f"pipeline: {e}")
    scoring = _build(ScoringConfig, data.get("scoring"), "scoring", errors, _num("scoring", errors))
    if scoring is not None and not scoring.match_radius > 0:
        errors.append("scoring.match_radius: must be positive")

    if errors:
        raise ConfigError(errors, path)
    return ScenarioConfig(
        name=str(data.get("name", "scenario")), duration=float(duration), seeds=seeds, world=world,
        robots=robots, sensing=sensing, fusion_policy=policy, fusion_covariance=cov, tracker=tracker,
        terrain=terrain, planner=planner, network=network, pipeline=pipeline, scoring=scoring, raw=data,
    )


def _parse_world(d, errors) -> WorldSpec | None:
    d = dict(d or {})
    try:
        patches = tuple(RoughPatch(tuple(map(float, p["center"])), float(p["radius"]), float(p.get("amplitude", 0.6)))
                        for p in d.pop("rough_patches", []) or [])
    except (KeyError, TypeError, ValueError):
        errors.append("world.rough_patches: each entry needs center [x, y], radius and optional amplitude")
        patches = ()
    objects = []
    for i, o in enumerate(d.pop("objects", []) or []):
        try:
            label = str(o["class"]).lower()
            ClassLabel[label.upper()]
            objects.append((label, tuple(float(v) for v in o["position"][:2])))
        except (KeyError, TypeError, ValueError, IndexError):
            errors.append(f"world.objects[{i}]: needs class in {[c.name.lower() for c in ClassLabel]} and position [x, y]")
    if "size" in d:
        try:
            d["size"] = tuple(float(v) for v in d["size"])
        except (TypeError, ValueError):
            errors.append("world.size: expected [width, height]")
            d.pop("size")
    if "classes" in d:
        d["classes"] = tuple(d["classes"])
    spec = _build(WorldSpec, {**d, "rough_patches": patches, "objects": tuple(objects)}, "world", errors)
    if spec is not None:
        for i, (_, (x, y)) in enumerate(spec.objects):
            if not (0 <= x <= spec.size[0] and 0 <= y <= spec.size[1]):
                errors.append(f"world.objects[{i}]: position ({x}, {y}) outside the world")
    return spec


def _parse_robots(items, errors, world: WorldSpec | None) -> tuple[RobotConfig, ...]:
    if not items:
        errors.append("robots: at least one robot is required")
        return ()
    out, ids = [], set()
    for i, r in enumerate(items):
        where = f"robots[{i}]"
        try:
            rid = int(r["id"])
            kind = str(r.get("kind", "ugv")).lower()
            start = tuple(float(v) for v in r["start"])
            if len(start) == 2:
                start = start + (0.0,)
            wps = tuple(tuple(float(v) for v in w[:2]) for w in r["waypoints"])
            rc = RobotConfig(rid, kind, start, wps, float(r.get("altitude", 60.0)),
                             float(r.get("speed", 3.0 if kind == "ugv" else 6.0)),
                             float(r.get("report_period", 1.0)))
        except (KeyError, TypeError, ValueError, IndexError):
            errors.append(f"{where}: needs id, start [x, y, heading_deg], waypoints [[x, y], ...]")
            continue
        unknown = set(r) - {"id", "kind", "start", "waypoints", "altitude", "speed", "report_period"}
        for k in sorted(unknown):
            errors.append(f"{where}.{k}: unknown key")
        if kind not in ("ugv", "uav"):
            errors.append(f"{where}.kind: must be ugv or uav")
        if rid in ids:
            errors.append(f"{where}.id: duplicate robot id {rid}")
        ids.add(rid)
        if not wps:
            errors.append(f"{where}.waypoints: at least one waypoint is required")
        if rc.speed <= 0:
            errors.append(f"{where}.speed: must be positive")
        if rc.report_period <= 0:
            errors.append(f"{where}.report_period: must be positive")
        if kind == "uav" and rc.altitude <= 0:
            errors.append(f"{where}.altitude: must be positive")
        if world is not None:
            for j, (x, y) in enumerate((start[:2],) + wps):
                if not (0 <= x <= world.size[0] and 0 <= y <= world.size[1]):
                    errors.append(f"{where}: point {j} ({x}, {y}) lies outside the world")
        out.append(rc)
    return tuple(out)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"], path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError([f"YAML parse error: {e}"], path) from e
    return parse_config(data, path)
