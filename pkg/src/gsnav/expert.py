"""Hybrid A* expert for dynamic splat scenes.

Motion-primitive search over unicycle states on the robot-navigable map,
with dynamic humans folded in as constant-velocity swept occupancy and a
reactive replanning loop that triggers on a period or on proximity between
an obstacle and the look-ahead segment of the executed trajectory.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from .camera import CameraModel, robot_camera_pose
from .errors import NoPathError
from .geometry import arc_end_offset, arc_points, point_polyline_distance, unicycle_step, wrap_angle
from .splats import GaussianSet
from .voxelgrid import OccupancyGrid2D


@dataclass
class RobotState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    w: float = 0.0

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def pose(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class MotionPrimitive:
    v: float
    w: float
    duration: float
    arc_length: float
    end_offset: tuple[float, float, float]


@dataclass
class PlannerWeights:
    w_len: float = 1.0
    w_steer: float = 0.3
    w_h: float = 1.0


@dataclass
class PlannedPath:
    times: np.ndarray  # (K+1,)
    states: list[RobotState]  # K+1 states
    actions: np.ndarray  # (K, 2)
    replanned_at: list[float] = field(default_factory=list)
    cost: float = 0.0
    expansions: int = 0

    def poses(self) -> np.ndarray:
        return np.array([s.pose() for s in self.states])

    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.states])


def build_motion_primitives(v_max: float, w_max: float, duration: float) -> list[MotionPrimitive]:
    """Nine constant-(v, w) arcs: {1/3, 2/3, 1} of v_max x {-w_max, 0, +w_max}."""
    if v_max <= 0 or w_max <= 0 or duration <= 0:
        raise ValueError("v_max, w_max, and duration must be positive")
    prims = []
    for scale in (1.0 / 3.0, 2.0 / 3.0, 1.0):
        v = scale * v_max
        for w in (-w_max, 0.0, w_max):
            prims.append(
                MotionPrimitive(
                    v=v,
                    w=w,
                    duration=duration,
                    arc_length=v * duration,
                    end_offset=arc_end_offset(v, w, duration),
                )
            )
    return prims


def filter_human_primitives(gaussians: GaussianSet, downsample_res: float) -> np.ndarray:
    """Drop high-uncertainty splats, then voxel-downsample the surviving means.

    Splats whose covariance trace strictly exceeds the nearest-rank 75th
    percentile are discarded; survivors are reduced to one centroid per
    `downsample_res` voxel. Returns (M, 3) points.
    """
    if len(gaussians) == 0:
        raise ValueError("cannot filter an empty primitive set")
    if downsample_res <= 0:
        raise ValueError("downsample_res must be positive")
    traces = gaussians.covariance_traces()
    order = np.sort(traces)
    rank = int(np.ceil(0.75 * len(traces)))  # nearest-rank percentile, 1-indexed
    threshold = order[rank - 1]
    survivors = gaussians.means[traces <= threshold]

    keys = np.floor(survivors / downsample_res).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, survivors)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(float)
    return sums / counts[:, None]


def update_navigable_map(
    base: OccupancyGrid2D,
    human_points: np.ndarray,
    human_velocity: np.ndarray,
    camera: CameraModel,
    robot_path_segment: np.ndarray,
    safety_margin: float,
    *,
    human_radius: float = 0.3,
    safety_buffer: float = 0.3,
    horizon: float = 2.0,
    time_step: float = 0.25,
) -> OccupancyGrid2D:
    """Fold a detected human into the navigable map as swept occupancy.

    The map is only updated when some human point is both inside the camera
    frustum and within `safety_margin` of the robot's path segment; the
    update stamps disks of radius human_radius + safety_buffer along the
    constant-velocity prediction over the horizon.
    """
    human_points = np.asarray(human_points, dtype=float).reshape(-1, 3)
    if len(human_points) == 0:
        return base
    in_view = camera.in_fov(human_points)
    near_path = (
        point_polyline_distance(human_points[:, :2], np.asarray(robot_path_segment, dtype=float))
        <= safety_margin
    )
    if not np.any(in_view & near_path):
        return base

    grid = base.copy()
    pts2d = human_points[:, :2]
    vel = np.asarray(human_velocity, dtype=float).reshape(2)
    ts = np.arange(0.0, horizon + 1e-9, time_step)
    centers = (pts2d[:, None, :] + ts[None, :, None] * vel[None, None, :]).reshape(-1, 2)
    radius = human_radius + safety_buffer

    paint = np.zeros(grid.dims, dtype=bool)
    cells = grid.cell_of(pts2d)
    ok = grid.in_bounds(cells)
    paint[cells[ok, 0], cells[ok, 1]] = True

    w = int(np.ceil(radius / grid.resolution)) + 1
    offs = np.stack(
        np.meshgrid(np.arange(-w, w + 1), np.arange(-w, w + 1), indexing="ij"), axis=-1
    ).reshape(-1, 2)
    base_cells = grid.cell_of(centers)
    cand = (base_cells[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    cc = grid.origin + (cand + 0.5) * grid.resolution
    rep = np.repeat(centers, len(offs), axis=0)
    hit = np.sum((cc - rep) ** 2, axis=1) <= radius * radius + 1e-12
    cand = cand[hit]
    ok = grid.in_bounds(cand)
    paint[cand[ok, 0], cand[ok, 1]] = True

    grid.occupied |= paint
    grid.inflated |= paint
    return grid


def should_replan(
    elapsed_since_plan: float,
    period: float,
    human_points: np.ndarray,
    lookahead: np.ndarray,
    margin: float,
) -> bool:
    """Replan when the period elapsed or an obstacle nears the look-ahead path."""
    if elapsed_since_plan >= period:
        return True
    human_points = np.asarray(human_points, dtype=float)
    if human_points.size == 0:
        return False
    lookahead = np.asarray(lookahead, dtype=float)
    if lookahead.size == 0:
        return False
    pts = human_points.reshape(len(human_points), -1)[:, :2]
    return float(np.min(point_polyline_distance(pts, lookahead[:, :2]))) < margin


def dijkstra_distance_field(grid: OccupancyGrid2D, goal, tolerance: float = 0.0) -> np.ndarray:
    """Shortest free-space distance (m) from every cell center to the goal region.

    8-connected over inflated-free cells; blocked or unreachable cells are
    inf. With a tolerance, every free cell whose center lies within it is a
    zero-distance source (the search only needs to reach the goal disk).
    """
    nx, ny = grid.dims
    free = ~grid.inflated
    field_out = np.full((nx, ny), np.inf)

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cx = grid.origin[0] + (ii + 0.5) * grid.resolution
    cy = grid.origin[1] + (jj + 0.5) * grid.resolution
    reach = max(tolerance, grid.resolution * 0.75)
    sources = free & ((cx - goal[0]) ** 2 + (cy - goal[1]) ** 2 <= reach**2)
    if not sources.any():
        return field_out

    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, weights = [], [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            src = free[max(0, -di) : nx - max(0, di), max(0, -dj) : ny - max(0, dj)]
            dst = free[max(0, di) : nx - max(0, -di), max(0, dj) : ny - max(0, -dj)]
            both = src & dst
            r = idx[max(0, -di) : nx - max(0, di), max(0, -dj) : ny - max(0, dj)][both]
            c = idx[max(0, di) : nx - max(0, -di), max(0, dj) : ny - max(0, -dj)][both]
            rows.append(r)
            cols.append(c)
            weights.append(np.full(len(r), np.hypot(di, dj) * grid.resolution))
    graph = coo_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx * ny, nx * ny),
    ).tocsr()
    dist = csgraph_dijkstra(graph, directed=False, indices=idx[sources], min_only=True)
    return dist.reshape(nx, ny)


def _theta_bin(theta: float, bins: int) -> int:
    return int(np.floor((theta + np.pi) / (2.0 * np.pi / bins))) % bins


def hybrid_astar(
    start: RobotState,
    goal,
    grid: OccupancyGrid2D,
    primitives: list[MotionPrimitive],
    weights: PlannerWeights,
    *,
    robot_radius: float = 0.3,
    goal_tolerance: float = 0.5,
    theta_bins: int = 16,
    node_budget: int = 200_000,
    control_dt: float = 0.1,
    heuristic_field: np.ndarray | None = None,
) -> PlannedPath:
    """Forward motion-primitive search with grid-bucketed duplicate detection.

    Node cost accumulates w_len * arc_length + w_steer * |w| * duration; the
    heuristic is an obstacle-aware Dijkstra distance field to the goal.
    Primitive arcs are collision-checked at <= resolution/2 spacing. Ties in
    the open set break on lowest f, then lowest h, then insertion order.
    """
    goal = np.asarray(goal, dtype=float).reshape(2)
    goal_cell = grid.cell_of(goal)[0]
    if not grid.in_bounds(np.array([goal_cell]))[0]:
        raise NoPathError("goal lies outside the navigable map")
    if not grid.free_for_radius(np.array([[start.x, start.y]]), robot_radius)[0]:
        raise NoPathError("start pose is in collision")

    if heuristic_field is None:
        heuristic_field = dijkstra_distance_field(grid, goal, tolerance=goal_tolerance)
    nx, ny = grid.dims
    res = grid.resolution
    ox, oy = float(grid.origin[0]), float(grid.origin[1])

    # Arc validity matches grid.free_for_radius exactly: a clearance-field
    # lookup settles points far from any decision boundary, and only the
    # remaining band runs the exact lattice scan. The field is computed on a
    # padded map so out-of-grid cells count as inflated here too.
    half_diag = res * np.sqrt(2.0) / 2.0
    pad = int(np.ceil((robot_radius + half_diag) / res)) + 1
    padded = np.pad(grid.inflated, pad, constant_values=True)
    clear = ndimage.distance_transform_edt(~padded)[pad:-pad, pad:-pad] * res
    sure_bar = robot_radius + half_diag
    dead_bar = robot_radius - half_diag

    def valid_points(wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        ci = np.floor((wx - ox) / res).astype(np.int64)
        cj = np.floor((wy - oy) / res).astype(np.int64)
        inb = (ci >= 0) & (ci < nx) & (cj >= 0) & (cj < ny)
        c = np.full(len(wx), -np.inf)
        c[inb] = clear[ci[inb], cj[inb]]
        out = c > sure_bar
        band = inb & ~out & (c > dead_bar)
        if band.any():
            out[band] = grid.free_for_radius(
                np.stack([wx[band], wy[band]], axis=1), robot_radius
            )
        return out

    # Local arc sample offsets per primitive, reused at every expansion.
    # Sample counts are multiples of the control substep count so the states
    # the executor will visit are a subset of the checked points.
    n_sub = max(1, int(round(primitives[0].duration / control_dt)))
    n_samples = [
        n_sub * max(1, int(np.ceil(p.arc_length / (res / 2.0) / n_sub))) for p in primitives
    ]
    local = [arc_points(p.v, p.w, p.duration, n) for p, n in zip(primitives, n_samples)]
    sample_xy = np.concatenate([pts[:, :2] for pts in local], axis=0)
    bounds = np.concatenate([[0], np.cumsum([len(pts) for pts in local])])
    sample_ranges = [(int(bounds[i]), int(bounds[i + 1])) for i in range(len(primitives))]

    inv_res = 1.0 / res

    def heuristic(x: float, y: float) -> float:
        ci = int(math.floor((x - ox) * inv_res))
        cj = int(math.floor((y - oy) * inv_res))
        if not (0 <= ci < nx and 0 <= cj < ny):
            return np.inf
        return heuristic_field[ci, cj]

    two_pi = 2.0 * np.pi
    inv_bin = theta_bins / two_pi

    def bucket(x: float, y: float, theta: float):
        return (
            int(math.floor((x - ox) * inv_res)),
            int(math.floor((y - oy) * inv_res)),
            int((theta + np.pi) * inv_bin) % theta_bins,
        )

    # node storage: parallel lists, parents by index
    xs, ys, thetas = [start.x], [start.y], [start.theta]
    parents, prim_ids, gs = [-1], [-1], [0.0]
    h0 = heuristic(start.x, start.y)
    if not np.isfinite(h0):
        raise NoPathError("start disconnected from goal on the navigable map")
    best_g = {bucket(start.x, start.y, start.theta): 0.0}
    counter = 0
    open_heap = [(weights.w_h * h0, h0, counter, 0)]
    expansions = 0

    goal_idx = None
    gx, gy = float(goal[0]), float(goal[1])
    if math.hypot(start.x - gx, start.y - gy) <= goal_tolerance:
        goal_idx = 0
    step_costs = [
        weights.w_len * p.arc_length + weights.w_steer * abs(p.w) * p.duration for p in primitives
    ]
    prim_offsets = [p.end_offset for p in primitives]
    w_h = weights.w_h
    sx_local = sample_xy[:, 0].copy()
    sy_local = sample_xy[:, 1].copy()
    while goal_idx is None and open_heap:
        f, h, _, node = heapq.heappop(open_heap)
        g = gs[node]
        nx_, ny_, nth = xs[node], ys[node], thetas[node]
        if g > best_g.get(bucket(nx_, ny_, nth), np.inf) + 1e-12:
            continue
        expansions += 1
        if expansions > node_budget:
            raise NoPathError(f"node budget {node_budget} exceeded")

        ct, st = math.cos(nth), math.sin(nth)
        wx = ct * sx_local - st * sy_local + nx_
        wy = st * sx_local + ct * sy_local + ny_
        valid = valid_points(wx, wy)
        for pid, (lo, hi) in enumerate(sample_ranges):
            if not valid[lo:hi].all():
                continue
            dx, dy, dth = prim_offsets[pid]
            cx = nx_ + ct * dx - st * dy
            cy = ny_ + st * dx + ct * dy
            cth = nth + dth
            if cth > np.pi:
                cth -= two_pi
            elif cth <= -np.pi:
                cth += two_pi
            cg = g + step_costs[pid]
            ckey = bucket(cx, cy, cth)
            if cg >= best_g.get(ckey, np.inf) - 1e-12:
                continue
            ch = heuristic(cx, cy)
            if not np.isfinite(ch):
                continue
            best_g[ckey] = cg
            xs.append(cx)
            ys.append(cy)
            thetas.append(cth)
            parents.append(node)
            prim_ids.append(pid)
            gs.append(cg)
            if math.hypot(cx - gx, cy - gy) <= goal_tolerance:
                goal_idx = len(xs) - 1
                break
            counter += 1
            heapq.heappush(open_heap, (cg + w_h * ch, ch, counter, len(xs) - 1))

    if goal_idx is None:
        raise NoPathError("open set exhausted without reaching the goal")

    # walk back the primitive chain, then roll it out at control_dt
    chain = []
    node = goal_idx
    while parents[node] >= 0:
        chain.append(prim_ids[node])
        node = parents[node]
    chain.reverse()

    times = [0.0]
    states = [RobotState(start.x, start.y, start.theta)]
    actions = []
    for pid in chain:
        prim = primitives[pid]
        n_steps = max(1, int(round(prim.duration / control_dt)))
        for _ in range(n_steps):
            s = states[-1]
            s.v, s.w = prim.v, prim.w
            nxt = unicycle_step(s.x, s.y, s.theta, prim.v, prim.w, control_dt)
            actions.append((prim.v, prim.w))
            states.append(RobotState(nxt[0], nxt[1], float(wrap_angle(nxt[2]))))
            times.append(times[-1] + control_dt)

    return PlannedPath(
        times=np.asarray(times),
        states=states,
        actions=np.asarray(actions, dtype=float).reshape(-1, 2),
        cost=gs[goal_idx],
        expansions=expansions,
    )


@dataclass
class ExpertSettings:
    v_max: float = 1.0
    w_max: float = 1.0
    primitive_duration: float = 0.5
    weights: PlannerWeights = field(default_factory=PlannerWeights)
    theta_bins: int = 16
    node_budget: int = 200_000
    goal_tolerance_plan: float = 0.5
    replan_period: float = 2.0
    safety_margin: float = 0.6
    lookahead_horizon: float = 2.0
    robot_radius: float = 0.3
    control_dt: float = 0.1
    decision_dt: float = 0.5
    downsample_res: float = 0.2
    human_radius: float = 0.3
    safety_buffer: float = 0.3
    cv_horizon: float = 2.0
    cv_time_step: float = 0.25
    camera_height: float = 0.4
    # painted-sweep cells this close to the replanning robot revert to the
    # static map; must cover the slow-primitive turning maneuver
    start_exemption: float = 0.7
    # the sweep of an oncoming human overshoots past the robot; cells on the
    # robot's far side (away from the human) are freed out to this radius so
    # retreat-and-detour plans stay expressible
    retreat_exemption: float = 2.5
    # but cells this close to a human's current root are never exempted
    human_keepout: float = 0.95


class ExpertController:
    """Plan-and-track controller with reactive replanning.

    Decisions are made at the observation cadence (decision_dt); each chosen
    action is held for one full window so rollouts replay exactly through
    the 0.5 s step protocol.
    """

    def __init__(self, base_grid: OccupancyGrid2D, goal, settings: ExpertSettings, camera: CameraModel):
        self.base_grid = base_grid
        self.goal = np.asarray(goal, dtype=float).reshape(2)
        self.settings = settings
        self.camera_intrinsics = camera
        self.primitives = build_motion_primitives(
            settings.v_max, settings.w_max, settings.primitive_duration
        )
        self.plan: PlannedPath | None = None
        self.plan_t0 = 0.0
        self.last_plan_time: float | None = None
        self.replanned_at: list[float] = []
        self.plan_log: list[dict] = []
        self._prev_roots: dict[int, tuple[float, np.ndarray]] = {}

    def _lookahead(self, t: float) -> np.ndarray:
        if self.plan is None:
            return np.array([])
        rel = t - self.plan_t0
        times = self.plan.times
        lo = int(np.searchsorted(times, rel - 1e-9))
        hi = int(np.searchsorted(times, rel + self.settings.lookahead_horizon + 1e-9))
        pts = self.plan.positions()[max(0, lo - 1) : hi + 1]
        return pts if len(pts) >= 1 else np.array([])

    def _estimate_velocity(self, idx: int, t: float, root: np.ndarray) -> np.ndarray:
        prev = self._prev_roots.get(idx)
        self._prev_roots[idx] = (t, root.copy())
        if prev is None or t - prev[0] <= 1e-9:
            return np.zeros(2)
        return (root - prev[1]) / (t - prev[0])

    def _camera_at(self, state: RobotState) -> CameraModel:
        pose = robot_camera_pose(state.x, state.y, state.theta, self.settings.camera_height)
        return self.camera_intrinsics.at_pose(pose)

    def _plan_from(self, t: float, state: RobotState, humans: list[dict], velocities: list[np.ndarray]):
        s = self.settings
        lookahead = self._lookahead(t)
        if lookahead.size == 0:
            lookahead = np.array([[state.x, state.y], self.goal])
        cam = self._camera_at(state)
        grid = self.base_grid
        for human, vel in zip(humans, velocities):
            grid = update_navigable_map(
                grid,
                human["points"],
                vel,
                cam,
                lookahead,
                s.safety_margin,
                human_radius=s.human_radius,
                safety_buffer=s.safety_buffer,
                horizon=s.cv_horizon,
                time_step=s.cv_time_step,
            )
        if grid is not self.base_grid:
            # The frozen sweep is a future-occupancy prediction; it may cover
            # the cell the robot currently (validly) occupies. Restore the
            # static map in an escape disk so replans from inside the sweep
            # remain feasible, but never free cells adjacent to a human.
            exempt = s.robot_radius + s.start_exemption
            painted = grid.inflated & ~self.base_grid.inflated
            if painted.any():
                cells = np.argwhere(painted)
                centers = grid.cell_centers(cells)
                robot_xy = np.array([state.x, state.y])
                rel = centers - robot_xy
                dist_robot = np.linalg.norm(rel, axis=1)
                # also free the retreat side: cells past the robot, away from
                # every human, that only the sweep overshoot painted
                ring = dist_robot <= exempt
                if humans:
                    away_all = dist_robot <= s.retreat_exemption
                    for human in humans:
                        root = np.asarray(human["root"], dtype=float)
                        u = robot_xy - root
                        norm = np.linalg.norm(u)
                        if norm > 1e-9:
                            away_all &= rel @ (u / norm) >= -0.25 * dist_robot
                    ring |= away_all
                # the ring never frees cells near a human's position over
                # the next half second of its predicted motion
                dist_humans = np.full(len(centers), np.inf)
                for human, vel in zip(humans, velocities):
                    root = np.asarray(human["root"], dtype=float)
                    dist_humans = np.minimum(
                        dist_humans, np.linalg.norm(centers - root, axis=1)
                    )
                    for tp in (0.0, 0.25, 0.5):
                        pred = root + tp * np.asarray(vel)
                        ring &= np.linalg.norm(centers - pred, axis=1) > s.human_keepout
                # Minimal maneuver core: the robot is physically there, so
                # its own side stays plannable even inside the keepout. Cells
                # must stay closer to the robot than to any human and clear
                # of the contact disk, so the core never bridges into a
                # collision; when a human presses closer than that, planning
                # fails rather than threading the gap.
                contact_guard = s.robot_radius + s.human_radius + 0.1
                core = (
                    (dist_robot <= s.robot_radius + 0.45)
                    & (dist_robot <= dist_humans)
                    & (dist_humans > contact_guard)
                )
                near = ring | core
                if near.any():
                    sel = cells[near]
                    grid.inflated[sel[:, 0], sel[:, 1]] = self.base_grid.inflated[sel[:, 0], sel[:, 1]]
                    grid.occupied[sel[:, 0], sel[:, 1]] = self.base_grid.occupied[sel[:, 0], sel[:, 1]]
        plan = hybrid_astar(
            RobotState(state.x, state.y, state.theta),
            self.goal,
            grid,
            self.primitives,
            s.weights,
            robot_radius=s.robot_radius,
            goal_tolerance=s.goal_tolerance_plan,
            theta_bins=s.theta_bins,
            node_budget=s.node_budget,
            control_dt=s.control_dt,
        )
        is_replan = self.plan is not None
        self.plan = plan
        self.plan_t0 = t
        self.last_plan_time = t
        if is_replan:
            self.replanned_at.append(t)
        self.plan_log.append(
            {
                "t": t,
                "replan": is_replan,
                "expansions": plan.expansions,
                "cost": plan.cost,
                "steps": len(plan.actions),
            }
        )

    def decide(self, t: float, state: RobotState, humans: list[dict]) -> tuple[float, float]:
        """Choose the (v, w) held for the next decision window.

        `humans` entries carry 'points' (M, 3) filtered splat means and
        'root' (2,) ground positions; pass an empty list for static scenes.
        Raises NoPathError when (re)planning fails.
        """
        s = self.settings
        velocities = [
            self._estimate_velocity(i, t, np.asarray(h["root"], dtype=float))
            for i, h in enumerate(humans)
        ]
        if self.plan is None:
            self._plan_from(t, state, humans, velocities)
        elif humans:
            all_points = np.concatenate([h["points"] for h in humans], axis=0)
            elapsed = t - (self.last_plan_time if self.last_plan_time is not None else -np.inf)
            lookahead = self._lookahead(t)
            if should_replan(elapsed, s.replan_period, all_points, lookahead, s.safety_margin):
                self._plan_from(t, state, humans, velocities)

        rel = t - self.plan_t0
        idx = int(round(rel / s.control_dt))
        if idx >= len(self.plan.actions):
            return 0.0, 0.0
        return float(self.plan.actions[idx, 0]), float(self.plan.actions[idx, 1])
