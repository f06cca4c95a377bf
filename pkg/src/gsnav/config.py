"""Dataclass configuration tree with JSON round-trip.

Every tunable default lives here; config files are JSON objects with
sections matching the dataclass names below.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadConfigError


@dataclass
class SceneConfig:
    resolution: float = 0.1  # m per voxel
    opacity_threshold: float = 2.0  # summed opacity per voxel
    ground_band: float = 0.05  # occupancy bands start this far above ground_z
    robot_height: float = 0.5
    human_height: float = 1.8


@dataclass
class RobotConfig:
    v_max: float = 1.0
    w_max: float = 1.0
    radius: float = 0.3
    control_dt: float = 0.1
    camera_width: int = 256
    camera_height: int = 144
    camera_hfov_deg: float = 90.0
    camera_mount_height: float = 0.4
    camera_near: float = 0.05


@dataclass
class HumanConfig:
    radius: float = 0.3
    height: float = 1.8
    splat_count: int = 250
    walk_speed: tuple[float, float] = (0.8, 1.6)
    run_speed: tuple[float, float] = (2.0, 3.0)
    frame_dt: float = 0.1  # animation frame interval
    min_spawn_clearance: float = 2.0  # from the robot start
    min_goal_clearance: float = 1.2  # from the robot goal
    # optional undirected angle window (degrees) between the human and robot
    # segments for crossing scenarios; None accepts any strict intersection
    crossing_angle_range: tuple[float, float] | None = None


@dataclass
class PlannerConfig:
    primitive_duration: float = 0.5
    w_len: float = 1.0
    w_steer: float = 0.3
    w_h: float = 1.0
    theta_bins: int = 16
    replan_period: float = 2.0
    safety_margin: float = 0.6
    goal_tolerance: float = 0.5
    node_budget: int = 200_000
    lookahead: float = 2.0
    cv_horizon: float = 2.0
    cv_step: float = 0.25
    downsample_res: float = 0.2
    safety_buffer: float = 0.3
    start_exemption: float = 0.7
    human_keepout: float = 0.95


@dataclass
class DatasetConfig:
    time_limit: float = 50.0
    goal_tolerance: float = 1.0
    obs_period: float = 0.5
    min_endpoint_dist: float = 3.0
    frames_per_sample: int = 3


@dataclass
class SimConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    human: HumanConfig = field(default_factory=HumanConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(data: dict) -> "SimConfig":
        cfg = SimConfig()
        sections = {f.name: f for f in dataclasses.fields(SimConfig)}
        for section, values in data.items():
            if section not in sections:
                raise BadConfigError(f"unknown config section {section!r}")
            target = getattr(cfg, section)
            known = {f.name: f.type for f in dataclasses.fields(target)}
            if not isinstance(values, dict):
                raise BadConfigError(f"config section {section!r} must be an object")
            for key, value in values.items():
                if key not in known:
                    raise BadConfigError(f"unknown key {key!r} in section {section!r}")
                if isinstance(value, list):
                    value = tuple(value)
                setattr(target, key, value)
        return cfg


def load_config(path) -> SimConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise BadConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise BadConfigError(f"{path} must contain a JSON object")
    return SimConfig.from_dict(data)
