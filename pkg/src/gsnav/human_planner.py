"""Plan human obstacle trajectories on the walkable map.

Start/goal pairs are rejection-sampled to produce interaction-rich
scenarios (crossing or running parallel to the robot's start-goal line),
seeded with grid A*, then relaxed into a smooth constant-speed trajectory
by elastic-band descent on spline control points.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import NoPathError, SamplingExhaustedError
from .geometry import segments_intersect, wrap_angle
from .human import HumanTrajectory
from .voxelgrid import OccupancyGrid2D

CROSSING = "crossing"
PARALLEL = "parallel"

PARALLEL_MAX_ANGLE = np.deg2rad(15.0)
PARALLEL_OFFSET_RANGE = (0.5, 2.0)
MIN_HUMAN_SEGMENT = 1.0
MAX_REJECTIONS = 10_000

# neighbor steps and costs for 8-connected grid search
_NEIGHBORS = [
    (di, dj, float(np.hypot(di, dj)))
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    if di or dj
]


@dataclass(frozen=True)
class EndpointPair:
    start: np.ndarray
    goal: np.ndarray
    interaction: str


def _line_offset(point, a, b) -> float:
    """Perpendicular distance from point to the infinite line through a, b."""
    d = b - a
    d = d / np.linalg.norm(d)
    rel = point - a
    return abs(d[0] * rel[1] - d[1] * rel[0])


def interaction_holds(start, goal, robot_start, robot_goal, interaction: str) -> bool:
    start, goal, robot_start, robot_goal = (
        np.asarray(v, dtype=float) for v in (start, goal, robot_start, robot_goal)
    )
    if interaction == CROSSING:
        return segments_intersect(start, goal, robot_start, robot_goal)
    if interaction == PARALLEL:
        hd = goal - start
        rd = robot_goal - robot_start
        if np.linalg.norm(hd) < 1e-9:
            return False
        ang = abs(wrap_angle(np.arctan2(hd[1], hd[0]) - np.arctan2(rd[1], rd[0])))
        ang = min(ang, np.pi - ang)
        if ang > PARALLEL_MAX_ANGLE:
            return False
        lo, hi = PARALLEL_OFFSET_RANGE
        return all(
            lo <= _line_offset(p, robot_start, robot_goal) <= hi for p in (start, goal)
        )
    raise ValueError(f"unknown interaction {interaction!r}")


def sample_interaction_endpoints(
    robot_start,
    robot_goal,
    grid: OccupancyGrid2D,
    rng_seed,
    interaction: str | None = None,
) -> EndpointPair:
    """Draw free-space human endpoints that cross or parallel the robot segment."""
    robot_start = np.asarray(robot_start, dtype=float)
    robot_goal = np.asarray(robot_goal, dtype=float)
    if np.linalg.norm(robot_goal - robot_start) < 1.0:
        raise ValueError("robot segment must be at least 1 m long")
    free = np.argwhere(~grid.inflated)
    if len(free) == 0:
        raise SamplingExhaustedError("walkable map has no free space")
    rng = np.random.default_rng(rng_seed)
    for _ in range(MAX_REJECTIONS):
        kind = interaction or (CROSSING if rng.random() < 0.5 else PARALLEL)
        idx = rng.integers(0, len(free), size=2)
        start = grid.cell_centers(free[idx[0]])
        goal = grid.cell_centers(free[idx[1]])
        if np.linalg.norm(goal - start) < MIN_HUMAN_SEGMENT:
            continue
        if interaction_holds(start, goal, robot_start, robot_goal, kind):
            return EndpointPair(start=start, goal=goal, interaction=kind)
    raise SamplingExhaustedError(
        f"no {interaction or 'interaction'} endpoint pair found in {MAX_REJECTIONS} draws"
    )


def astar_2d(grid: OccupancyGrid2D, start, goal) -> np.ndarray:
    """Cost-optimal 8-connected path of cell centers on the inflated-free map."""
    start_cell = tuple(grid.cell_of(start)[0])
    goal_cell = tuple(grid.cell_of(goal)[0])
    for cell, label in ((start_cell, "start"), (goal_cell, "goal")):
        if not grid.in_bounds(np.array([cell]))[0] or grid.inflated[cell]:
            raise NoPathError(f"{label} cell {cell} is not in free space")

    res = grid.resolution
    nx, ny = grid.dims
    inflated = grid.inflated

    def h(cell):
        return res * np.hypot(cell[0] - goal_cell[0], cell[1] - goal_cell[1])

    g_costs = {start_cell: 0.0}
    parents = {start_cell: None}
    counter = 0
    open_heap = [(h(start_cell), counter, start_cell)]
    closed = set()
    while open_heap:
        f, _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal_cell:
            path = []
            cur = cell
            while cur is not None:
                path.append(cur)
                cur = parents[cur]
            cells = np.array(path[::-1], dtype=float)
            return grid.cell_centers(cells)
        closed.add(cell)
        g = g_costs[cell]
        for di, dj, step in _NEIGHBORS:
            ni, nj = cell[0] + di, cell[1] + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or inflated[ni, nj]:
                continue
            ng = g + step * res
            nb = (ni, nj)
            if nb not in g_costs or ng < g_costs[nb] - 1e-12:
                g_costs[nb] = ng
                parents[nb] = cell
                counter += 1
                heapq.heappush(open_heap, (ng + h(nb), counter, nb))
    raise NoPathError(f"goal cell {goal_cell} unreachable from {start_cell}")


def _downsample(points: np.ndarray, spacing: float) -> np.ndarray:
    kept = [points[0]]
    acc = 0.0
    for k in range(1, len(points)):
        acc += float(np.linalg.norm(points[k] - points[k - 1]))
        if acc >= spacing:
            kept.append(points[k])
            acc = 0.0
    if np.linalg.norm(kept[-1] - points[-1]) > 1e-12:
        kept.append(points[-1])
    return np.array(kept)


def _bilinear(field: np.ndarray, grid: OccupancyGrid2D, points: np.ndarray) -> np.ndarray:
    """Sample a cell-centered scalar field at world points (edge-clamped)."""
    u = (points - grid.origin) / grid.resolution - 0.5
    i0 = np.clip(np.floor(u[:, 0]).astype(int), 0, grid.dims[0] - 2)
    j0 = np.clip(np.floor(u[:, 1]).astype(int), 0, grid.dims[1] - 2)
    fx = np.clip(u[:, 0] - i0, 0.0, 1.0)
    fy = np.clip(u[:, 1] - j0, 0.0, 1.0)
    f00 = field[i0, j0]
    f10 = field[i0 + 1, j0]
    f01 = field[i0, j0 + 1]
    f11 = field[i0 + 1, j0 + 1]
    return (
        f00 * (1 - fx) * (1 - fy)
        + f10 * fx * (1 - fy)
        + f01 * (1 - fx) * fy
        + f11 * fx * fy
    )


def _elastic_band(
    pts: np.ndarray,
    grid: OccupancyGrid2D,
    clearance_goal: float,
    iterations: int,
    lr: float = 0.02,
    barrier_weight: float = 4.0,
) -> np.ndarray:
    """Gradient descent on sum of squared second differences plus a clearance barrier."""
    if len(pts) < 3:
        return pts.copy()
    clear = grid.clearance_field()
    if not np.all(np.isfinite(clear)):
        clear = np.full(grid.dims, 1e3)
    gx, gy = np.gradient(clear, grid.resolution)
    pts = pts.copy()
    n = len(pts)
    for _ in range(iterations):
        grad = np.zeros_like(pts)
        d2 = pts[:-2] - 2 * pts[1:-1] + pts[2:]
        # d/dP_i of sum ||P_{k-1} - 2 P_k + P_{k+1}||^2
        for k in range(len(d2)):
            grad[k] += 2 * d2[k]
            grad[k + 1] += -4 * d2[k]
            grad[k + 2] += 2 * d2[k]
        c = _bilinear(clear, grid, pts)
        deficit = np.maximum(0.0, clearance_goal - c)
        cg = np.stack([_bilinear(gx, grid, pts), _bilinear(gy, grid, pts)], axis=1)
        grad += -2.0 * barrier_weight * deficit[:, None] * cg
        grad[0] = 0.0
        grad[-1] = 0.0
        cand = pts - lr * grad
        ok = grid.is_free_inflated(cand)
        pts[1 : n - 1] = np.where(ok[1 : n - 1, None], cand[1 : n - 1], pts[1 : n - 1])
    return pts


def _chord_resample(curve_xy: np.ndarray, step: float) -> np.ndarray:
    """Points on a densely sampled curve with equal consecutive chord lengths.

    The final curve endpoint is always appended (its chord may be shorter).
    """
    samples = [curve_xy[0]]
    cur = curve_xy[0]
    k = 1
    while k < len(curve_xy):
        d = np.linalg.norm(curve_xy[k] - cur)
        if d < step:
            k += 1
            continue
        # bisect along segment [curve_xy[k-1], curve_xy[k]] for an exact chord
        lo_pt, hi_pt = curve_xy[k - 1], curve_xy[k]
        lo_t, hi_t = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            p = lo_pt + mid * (hi_pt - lo_pt)
            if np.linalg.norm(p - cur) < step:
                lo_t = mid
            else:
                hi_t = mid
        cur = lo_pt + hi_t * (hi_pt - lo_pt)
        samples.append(cur)
    end = curve_xy[-1]
    if np.linalg.norm(end - samples[-1]) > 1e-9:
        samples.append(end)
    return np.array(samples)


def _headings(points: np.ndarray) -> np.ndarray:
    """Tangent angles from central differences (one-sided at the ends)."""
    diffs = np.empty_like(points)
    diffs[1:-1] = points[2:] - points[:-2]
    diffs[0] = points[1] - points[0]
    diffs[-1] = points[-1] - points[-2]
    return np.arctan2(diffs[:, 1], diffs[:, 0])


def _timed_trajectory(points: np.ndarray, speed: float, fallback: bool) -> HumanTrajectory:
    gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    times = np.concatenate([[0.0], np.cumsum(gaps / speed)])
    samples = np.column_stack([times, points, _headings(points)])
    return HumanTrajectory(samples=samples, speed=speed, smoothing_fallback=fallback)


def smooth_spline(
    seed_path: np.ndarray,
    grid: OccupancyGrid2D,
    speed: float,
    frame_dt: float = 0.1,
    human_radius: float = 0.3,
    waypoint_spacing: float = 0.5,
    iterations: int = 200,
) -> HumanTrajectory:
    """Relax a grid path into a constant-speed trajectory on the walkable map.

    Falls back to the (resampled) seed polyline when no collision-free
    smoothing is found; the result is flagged via `smoothing_fallback`.
    """
    seed_path = np.asarray(seed_path, dtype=float).reshape(-1, 2)
    if len(seed_path) < 2:
        raise ValueError("seed path needs at least two points")
    if speed <= 0 or frame_dt <= 0:
        raise ValueError("speed and frame_dt must be positive")
    step = speed * frame_dt

    ctrl0 = _downsample(seed_path, waypoint_spacing)
    ctrl = _elastic_band(ctrl0, grid, clearance_goal=human_radius, iterations=iterations)

    for blend in (1.0, 0.5, 0.25, 0.0):
        pts = ctrl0 + blend * (ctrl - ctrl0)
        dedup = [pts[0]]
        for p in pts[1:]:
            if np.linalg.norm(p - dedup[-1]) > 1e-9:
                dedup.append(p)
        pts = np.array(dedup)
        if len(pts) < 2:
            break
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        tan0 = (pts[1] - pts[0]) / (s[1] - s[0])
        tan1 = (pts[-1] - pts[-2]) / (s[-1] - s[-2])
        spline = CubicSpline(s, pts, bc_type=((1, tan0), (1, tan1)))
        dense = spline(np.linspace(0.0, s[-1], max(1000, 40 * len(pts))))
        samples = _chord_resample(dense, step)
        if len(samples) >= 2 and grid.is_free_inflated(samples).all():
            return _timed_trajectory(samples, speed, fallback=False)

    samples = _chord_resample(seed_path, step)
    if len(samples) < 2:
        samples = np.array([seed_path[0], seed_path[-1]])
    return _timed_trajectory(samples, speed, fallback=True)
