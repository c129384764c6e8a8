from .config import ConfigError, RobotConfig, ScenarioConfig, load_config, parse_config
from .pipeline import PipelineModel, compose_latency, pipeline_latency, throughput_check
from .runner import RunResult, ScenarioError, run_scenario
from .scoring import RunMetrics, cop_consistency, greedy_match, score_fleet, score_tracks
from .sensing import (
    SensingModel,
    depth_sigma,
    simulate_detector,
    simulate_lidar,
    simulate_pose,
    simulate_stereo_cloud,
)
from .world import PlacementError, World, WorldObject, WorldSpec, gen_world

__all__ = [
    "ConfigError", "PipelineModel", "PlacementError", "RobotConfig", "RunMetrics", "RunResult",
    "ScenarioConfig", "ScenarioError", "SensingModel", "World", "WorldObject", "WorldSpec",
    "compose_latency", "cop_consistency", "depth_sigma", "gen_world", "greedy_match", "load_config",
    "parse_config", "pipeline_latency", "run_scenario", "score_fleet", "score_tracks", "simulate_detector",
    "simulate_lidar", "simulate_pose", "simulate_stereo_cloud", "throughput_check",
]
