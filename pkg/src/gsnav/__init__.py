"""Gaussian-splat navigation simulator and dataset toolkit."""

from .camera import CameraModel, intrinsics_from_hfov, robot_camera_pose
from .config import SimConfig, load_config
from .episode import (
    EpisodeConfig,
    EpisodeRecord,
    Sample,
    SceneAssets,
    build_assets,
    build_scenario,
    compute_metrics,
    compute_relative_goal,
    run_episode,
    sample_robot_endpoints,
)
from .expert import (
    ExpertController,
    ExpertSettings,
    MotionPrimitive,
    PlannedPath,
    PlannerWeights,
    RobotState,
    build_motion_primitives,
    filter_human_primitives,
    hybrid_astar,
    should_replan,
    update_navigable_map,
)
from .geometry import RigidTransform
from .human import AnimatedHuman, HumanModel, HumanTrajectory, human_prims_at, make_human_model, trajectory_to_root_motion
from .human_planner import EndpointPair, astar_2d, sample_interaction_endpoints, smooth_spline
from .render import Image, render, render_observation, render_reference
from .splats import (
    GaussianPrimitive,
    GaussianSet,
    SplatScene,
    load_scene,
    save_scene,
    transform_gaussians,
)
from .synthetic import make_connected_scene, make_synthetic_scene
from .voxelgrid import OccupancyGrid2D, VoxelGrid, inflate, project_occupancy, voxelize

__version__ = "0.1.0"
