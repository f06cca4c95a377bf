"""Episode orchestration: scenario construction, expert rollout, metrics.

One episode samples (or accepts) robot endpoints, plans human obstacle
trajectories on the walkable map, runs the expert closed loop, and records
per-timestep tuples. The physics window stepper here is shared verbatim
with the interactive step service so open-loop action replay reproduces
logged states.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .camera import CameraModel, intrinsics_from_hfov, robot_camera_pose
from .config import SimConfig
from .errors import NoPathError, SamplingExhaustedError
from .expert import ExpertController, ExpertSettings, PlannerWeights, RobotState, filter_human_primitives
from .geometry import unicycle_step, wrap_angle
from .human import AnimatedHuman, HumanModel, make_human_model, trajectory_to_root_motion
from .human_planner import astar_2d, sample_interaction_endpoints, smooth_spline
from .splats import SplatScene
from .voxelgrid import HUMAN_WALKABLE, ROBOT_NAVIGABLE, OccupancyGrid2D, inflate, project_occupancy, voxelize

SUCCESS = "success"
COLLISION = "collision"
TIMEOUT = "timeout"
PLAN_FAILURE = "plan-failure"


@dataclass
class EpisodeConfig:
    scene: str
    seed: int
    start: tuple[float, float] | None = None
    start_heading: float | None = None
    goal: tuple[float, float] | None = None
    human_count: int = 0
    human_speeds: tuple[float, ...] | None = None
    interaction: str | None = None  # "crossing" | "parallel" | None (mixed)
    gait: str = "walk"
    control_dt: float = 0.1
    time_limit: float = 50.0
    goal_tolerance: float = 1.0

    def __post_init__(self):
        if self.human_count not in (0, 1, 2):
            raise ValueError("human_count must be 0, 1, or 2")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("start", "goal", "human_speeds"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @staticmethod
    def from_dict(data: dict) -> "EpisodeConfig":
        kwargs = dict(data)
        for key in ("start", "goal", "human_speeds"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return EpisodeConfig(**kwargs)


@dataclass
class Sample:
    frames: list[str]  # 3 frame ids, oldest first, 0.5 s apart
    prev_action: tuple[float, float]
    rel_goal: tuple[float, float]
    action: tuple[float, float]
    t: float
    pose: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "prev_action": list(self.prev_action),
            "rel_goal": list(self.rel_goal),
            "action": list(self.action),
            "t": self.t,
            "pose": list(self.pose),
        }


@dataclass
class EpisodeRecord:
    config: EpisodeConfig
    times: np.ndarray
    states: list[RobotState]
    actions: np.ndarray
    outcome: str
    reaching_time: float
    replanned_at: list[float]
    min_human_distance: float
    samples: list[Sample] = field(default_factory=list)
    frame_files: list[str] = field(default_factory=list)
    humans: list[AnimatedHuman] = field(default_factory=list)
    plan_log: list[dict] = field(default_factory=list)

    @property
    def replan_count(self) -> int:
        return len(self.replanned_at)

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS


@dataclass
class SceneAssets:
    """Maps (and optionally splats) an episode runs against."""

    name: str
    nav_grid: OccupancyGrid2D
    walk_grid: OccupancyGrid2D
    scene: SplatScene | None = None


def build_maps(scene: SplatScene, cfg: SimConfig) -> tuple[OccupancyGrid2D, OccupancyGrid2D]:
    """Voxelize, band-project, and inflate the robot and human maps."""
    grid = voxelize(scene, cfg.scene.resolution, cfg.scene.opacity_threshold)
    z0 = scene.ground_z + cfg.scene.ground_band
    nav = project_occupancy(grid, z0, scene.ground_z + cfg.scene.robot_height, ROBOT_NAVIGABLE)
    walk = project_occupancy(grid, z0, scene.ground_z + cfg.scene.human_height, HUMAN_WALKABLE)
    return inflate(nav, cfg.robot.radius), inflate(walk, cfg.human.radius)


def build_assets(scene: SplatScene, cfg: SimConfig) -> SceneAssets:
    nav, walk = build_maps(scene, cfg)
    return SceneAssets(name=scene.name, nav_grid=nav, walk_grid=walk, scene=scene)


def compute_relative_goal(pose, goal) -> tuple[float, float]:
    """Goal displacement expressed in the robot's local frame."""
    x, y, theta = float(pose[0]), float(pose[1]), float(pose[2])
    gx, gy = float(goal[0]), float(goal[1])
    ct, st = np.cos(theta), np.sin(theta)
    return (ct * (gx - x) + st * (gy - y), -st * (gx - x) + ct * (gy - y))


def sample_robot_endpoints(
    grid: OccupancyGrid2D,
    min_dist: float,
    rng,
    robot_radius: float | None = None,
    same_component: bool = False,
    max_draws: int = 10_000,
):
    """Free-space start pose and goal, at least `min_dist` apart.

    The start heading points at the goal. With `robot_radius` set, both
    endpoints must clear the footprint collision predicate; with
    `same_component`, they must share a connected component of the
    (footprint-filtered) free space.
    """
    free = np.argwhere(~grid.inflated)
    if len(free) == 0:
        raise SamplingExhaustedError("no free space to sample endpoints")
    if robot_radius is not None:
        ok = grid.free_for_radius(grid.cell_centers(free), robot_radius)
        free = free[ok]
        if len(free) == 0:
            raise SamplingExhaustedError("no free space clears the robot footprint")
    labels = None
    if same_component:
        mask = np.zeros(grid.dims, dtype=bool)
        mask[free[:, 0], free[:, 1]] = True
        labels, _ = ndimage.label(mask, structure=np.ones((3, 3)))
    for _ in range(max_draws):
        idx = rng.integers(0, len(free), size=2)
        c0, c1 = free[idx[0]], free[idx[1]]
        start = grid.cell_centers(c0)
        goal = grid.cell_centers(c1)
        if np.linalg.norm(goal - start) < min_dist:
            continue
        if labels is not None and labels[c0[0], c0[1]] != labels[c1[0], c1[1]]:
            continue
        heading = float(np.arctan2(goal[1] - start[1], goal[0] - start[0]))
        return RobotState(float(start[0]), float(start[1]), heading), goal
    raise SamplingExhaustedError(f"no endpoint pair found in {max_draws} draws")


@dataclass
class Scenario:
    start: RobotState
    goal: np.ndarray
    humans: list[AnimatedHuman]


def _human_seed(ep_seed: int, index: int) -> int:
    return (ep_seed * 1000 + 17 + index) & 0x7FFFFFFF


def build_scenario(assets: SceneAssets, ep: EpisodeConfig, cfg: SimConfig) -> Scenario:
    """Deterministically expand an episode config into start, goal, and humans.

    Seed streams are keyed by (episode seed, purpose) so adding or removing
    humans never perturbs the robot endpoints.
    """
    if ep.start is not None and ep.goal is not None:
        heading = ep.start_heading
        if heading is None:
            heading = float(np.arctan2(ep.goal[1] - ep.start[1], ep.goal[0] - ep.start[0]))
        start = RobotState(float(ep.start[0]), float(ep.start[1]), heading)
        goal = np.asarray(ep.goal, dtype=float)
    else:
        rng = np.random.default_rng([ep.seed, 0])
        # extra footprint margin so the start is never wedged where every
        # first arc collides (the primitive set has no stop or reverse)
        start, goal = sample_robot_endpoints(
            assets.nav_grid,
            cfg.dataset.min_endpoint_dist,
            rng,
            robot_radius=cfg.robot.radius + 0.25,
            same_component=True,
        )

    humans: list[AnimatedHuman] = []
    for i in range(ep.human_count):
        rng = np.random.default_rng([ep.seed, 10 + i])
        model = make_human_model(
            cfg.human.height, cfg.human.radius, cfg.human.splat_count, seed=_human_seed(ep.seed, i)
        )
        if ep.human_speeds is not None and i < len(ep.human_speeds):
            speed = float(ep.human_speeds[i])
        else:
            lo, hi = cfg.human.run_speed if ep.gait == "run" else cfg.human.walk_speed
            speed = float(rng.uniform(lo, hi))
        traj = None
        for attempt in range(100):
            try:
                pair = sample_interaction_endpoints(
                    start.xy(), goal, assets.walk_grid,
                    rng_seed=[ep.seed, 10 + i, attempt],
                    interaction=ep.interaction,
                )
                if pair.interaction == "crossing" and cfg.human.crossing_angle_range is not None:
                    hd = pair.goal - pair.start
                    rd = goal - start.xy()
                    ang = abs(wrap_angle(np.arctan2(hd[1], hd[0]) - np.arctan2(rd[1], rd[0])))
                    ang = np.degrees(min(ang, np.pi - ang))
                    lo_deg, hi_deg = cfg.human.crossing_angle_range
                    if not (lo_deg <= ang <= hi_deg):
                        continue
                if np.linalg.norm(pair.start - start.xy()) < cfg.human.min_spawn_clearance:
                    continue
                if np.linalg.norm(pair.goal - goal) < cfg.human.min_goal_clearance:
                    continue
                seed_path = astar_2d(assets.walk_grid, pair.start, pair.goal)
                cand = smooth_spline(
                    seed_path,
                    assets.walk_grid,
                    speed,
                    frame_dt=cfg.human.frame_dt,
                    human_radius=cfg.human.radius,
                )
                # The robot is slow (and possibly blind) right at its start,
                # and success triggers near its goal: keep human paths off
                # those two spots. The goal guard is dropped late rather
                # than failing the scenario outright.
                pos = cand.positions()
                if np.min(np.linalg.norm(pos - start.xy(), axis=1)) < cfg.human.min_spawn_clearance / 2 + 0.2:
                    continue
                if attempt < 60 and np.min(
                    np.linalg.norm(pos - goal, axis=1)
                ) < cfg.human.min_goal_clearance / 2 + 0.2:
                    continue
                traj = cand
                break
            except (NoPathError, SamplingExhaustedError):
                continue
        if traj is None:
            raise SamplingExhaustedError(f"could not place human {i} for seed {ep.seed}")
        motion = trajectory_to_root_motion(traj, cfg.human.frame_dt)
        humans.append(AnimatedHuman(model=model, motion=motion, frame_dt=cfg.human.frame_dt, trajectory=traj))
    return Scenario(start=start, goal=goal, humans=humans)


def expert_settings(cfg: SimConfig) -> ExpertSettings:
    return ExpertSettings(
        v_max=cfg.robot.v_max,
        w_max=cfg.robot.w_max,
        primitive_duration=cfg.planner.primitive_duration,
        weights=PlannerWeights(cfg.planner.w_len, cfg.planner.w_steer, cfg.planner.w_h),
        theta_bins=cfg.planner.theta_bins,
        node_budget=cfg.planner.node_budget,
        goal_tolerance_plan=cfg.planner.goal_tolerance,
        replan_period=cfg.planner.replan_period,
        safety_margin=cfg.planner.safety_margin,
        lookahead_horizon=cfg.planner.lookahead,
        robot_radius=cfg.robot.radius,
        control_dt=cfg.robot.control_dt,
        decision_dt=cfg.dataset.obs_period,
        downsample_res=cfg.planner.downsample_res,
        human_radius=cfg.human.radius,
        safety_buffer=cfg.planner.safety_buffer,
        cv_horizon=cfg.planner.cv_horizon,
        cv_time_step=cfg.planner.cv_step,
        camera_height=cfg.robot.camera_mount_height,
        start_exemption=cfg.planner.start_exemption,
        human_keepout=cfg.planner.human_keepout,
    )


def planner_camera(cfg: SimConfig) -> CameraModel:
    cam = intrinsics_from_hfov(
        cfg.robot.camera_width, cfg.robot.camera_height, np.deg2rad(cfg.robot.camera_hfov_deg)
    )
    cam.near = cfg.robot.camera_near
    return cam


def camera_at_state(cfg: SimConfig, state: RobotState) -> CameraModel:
    cam = planner_camera(cfg)
    return cam.at_pose(
        robot_camera_pose(state.x, state.y, state.theta, cfg.robot.camera_mount_height)
    )


def advance_window(
    state: RobotState,
    t0: float,
    action: tuple[float, float],
    humans: list[AnimatedHuman],
    nav_grid: OccupancyGrid2D,
    cfg: SimConfig,
    ep: EpisodeConfig,
    goal: np.ndarray,
):
    """Integrate one held action over an observation window at control_dt.

    Returns (states_after_each_substep, times, outcome_or_None,
    min_human_distance). Collision is checked against the static inflated
    map (robot footprint) and against human roots; success means entering
    the goal tolerance disk. Collision dominates success within a substep.
    """
    v, w = float(action[0]), float(action[1])
    v = float(np.clip(v, -cfg.robot.v_max, cfg.robot.v_max))
    w = float(np.clip(w, -cfg.robot.w_max, cfg.robot.w_max))
    dt = ep.control_dt
    n_sub = int(round(cfg.dataset.obs_period / dt))
    contact = cfg.robot.radius + cfg.human.radius

    states, times = [], []
    outcome = None
    min_hd = np.inf
    x, y, theta = state.x, state.y, state.theta
    t = t0
    for _ in range(n_sub):
        x, y, theta = unicycle_step(x, y, theta, v, w, dt)
        theta = float(wrap_angle(theta))
        t = t + dt
        states.append(RobotState(x, y, theta, v, w))
        times.append(t)
        collided = not nav_grid.free_for_radius(np.array([[x, y]]), cfg.robot.radius)[0]
        for h in humans:
            hx, hy, _ = h.root_at(t)
            d = float(np.hypot(hx - x, hy - y))
            min_hd = min(min_hd, d)
            if d < contact:
                collided = True
        if collided:
            outcome = COLLISION
            break
        if np.hypot(goal[0] - x, goal[1] - y) <= ep.goal_tolerance:
            outcome = SUCCESS
            break
        if t >= ep.time_limit - 1e-9:
            outcome = TIMEOUT
            break
    return states, times, outcome, min_hd


def run_episode(
    assets: SceneAssets,
    ep: EpisodeConfig,
    cfg: SimConfig,
    frame_writer=None,
) -> EpisodeRecord:
    """Roll out the expert; optionally render observations every obs_period.

    `frame_writer(index, t, state, humans)` must return a frame id string;
    when None, no observations are rendered (planning-only rollout).
    """
    scenario = build_scenario(assets, ep, cfg)
    controller = ExpertController(
        assets.nav_grid, scenario.goal, expert_settings(cfg), planner_camera(cfg)
    )
    settings = controller.settings

    t = 0.0
    state = scenario.start
    times = [0.0]
    states = [RobotState(state.x, state.y, state.theta)]
    actions: list[tuple[float, float]] = []
    samples: list[Sample] = []
    frame_files: list[str] = []
    outcome = None
    reaching_time = ep.time_limit
    min_hd = np.inf
    prev_action = (0.0, 0.0)

    n_windows = int(np.ceil(ep.time_limit / cfg.dataset.obs_period))
    for k in range(n_windows):
        humans_obs = []
        for h in scenario.humans:
            pts = filter_human_primitives(h.prims_at(t), settings.downsample_res)
            hx, hy, _ = h.root_at(t)
            humans_obs.append({"points": pts, "root": np.array([hx, hy])})
        try:
            action = controller.decide(t, state, humans_obs)
        except NoPathError:
            outcome = PLAN_FAILURE
            reaching_time = t
            break

        if frame_writer is not None:
            frame_id = frame_writer(k, t, state, scenario.humans)
            frame_files.append(frame_id)
            hist = [frame_files[max(0, k - 2)], frame_files[max(0, k - 1)], frame_files[k]]
            samples.append(
                Sample(
                    frames=hist,
                    prev_action=prev_action,
                    rel_goal=compute_relative_goal(state.pose(), scenario.goal),
                    action=action,
                    t=t,
                    pose=(state.x, state.y, state.theta),
                )
            )

        sub_states, sub_times, outcome, hd = advance_window(
            state, t, action, scenario.humans, assets.nav_grid, cfg, ep, scenario.goal
        )
        min_hd = min(min_hd, hd)
        for s, st_t in zip(sub_states, sub_times):
            states.append(s)
            times.append(st_t)
            actions.append(action)
        prev_action = action
        if sub_states:
            last = sub_states[-1]
            state = RobotState(last.x, last.y, last.theta)
            t = sub_times[-1]
        if outcome is not None:
            reaching_time = t
            break

    if outcome is None:
        outcome = TIMEOUT
        reaching_time = ep.time_limit

    if outcome == SUCCESS:
        reaching_time = t

    return EpisodeRecord(
        config=ep,
        times=np.asarray(times),
        states=states,
        actions=np.asarray(actions, dtype=float).reshape(-1, 2),
        outcome=outcome,
        reaching_time=float(reaching_time),
        replanned_at=list(controller.replanned_at),
        min_human_distance=float(min_hd),
        samples=samples,
        frame_files=frame_files,
        humans=scenario.humans,
        plan_log=list(controller.plan_log),
    )


def compute_metrics(records) -> tuple[float, float]:
    """Success rate and average reaching time (failures count the full limit)."""
    records = list(records)
    if not records:
        raise ValueError("no episode records")
    successes = sum(1 for r in records if r.outcome == SUCCESS)
    total_time = sum(
        r.reaching_time if r.outcome == SUCCESS else r.config.time_limit for r in records
    )
    return successes / len(records), total_time / len(records)
