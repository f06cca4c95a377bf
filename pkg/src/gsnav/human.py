"""Procedural human obstacle: a rigid Gaussian cluster animated along a 2D path.

The cluster approximates a standing person as splats on a capsule surface
(cylinder plus hemispherical cap). Animation is rigid root motion only:
the whole cluster follows the planned trajectory with yaw tracking the
local tangent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, interpolate_yaw, wrap_angle
from .splats import GaussianSet, transform_gaussians


@dataclass
class HumanModel:
    """Canonical-frame human splats: origin at ground between feet, +x facing."""

    gaussians: GaussianSet
    height: float
    radius: float

    @property
    def canonical_prims(self) -> GaussianSet:
        return self.gaussians


@dataclass
class HumanTrajectory:
    """Constant-speed timed 2D samples (t, x, y, heading)."""

    samples: np.ndarray  # (T, 4)
    speed: float
    smoothing_fallback: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 4)
        if len(self.samples) < 2:
            raise ValueError("trajectory needs at least two samples")
        if abs(self.samples[0, 0]) > 1e-12:
            raise ValueError("trajectory must start at t=0")
        if np.any(np.diff(self.samples[:, 0]) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def duration(self) -> float:
        return float(self.samples[-1, 0])

    def positions(self) -> np.ndarray:
        return self.samples[:, 1:3]


def make_human_model(height: float, radius: float, count: int, seed: int) -> HumanModel:
    """Sample `count` isotropic splats on a capsule surface, head band tinted."""
    if height <= 0 or radius <= 0:
        raise ValueError("height and radius must be positive")
    if count < 10:
        raise ValueError("count must be at least 10")
    rng = np.random.default_rng(seed)
    cyl_h = height - radius
    area_cyl = 2.0 * np.pi * radius * cyl_h
    area_cap = 2.0 * np.pi * radius * radius
    n_cap = int(round(count * area_cap / (area_cyl + area_cap)))
    n_cyl = count - n_cap

    phi = rng.uniform(0.0, 2.0 * np.pi, n_cyl)
    z = rng.uniform(0.0, cyl_h, n_cyl)
    cyl = np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=1)

    # uniform on the upper hemisphere, then lifted to sit on the cylinder
    phi = rng.uniform(0.0, 2.0 * np.pi, n_cap)
    cosu = rng.uniform(0.0, 1.0, n_cap)
    sinu = np.sqrt(1.0 - cosu**2)
    cap = np.stack(
        [radius * sinu * np.cos(phi), radius * sinu * np.sin(phi), cyl_h + radius * cosu],
        axis=1,
    )
    means = np.concatenate([cyl, cap], axis=0)

    body_color = np.array([0.20, 0.30, 0.65])
    head_color = np.array([0.80, 0.62, 0.50])
    colors = np.where((means[:, 2] > 0.85 * height)[:, None], head_color, body_color)

    n = len(means)
    return HumanModel(
        gaussians=GaussianSet(
            means=means,
            quats=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
            scales=np.full((n, 3), radius / 4.0),
            opacities=np.full(n, 0.95),
            colors=colors,
        ),
        height=height,
        radius=radius,
    )


def _interp_pose(samples: np.ndarray, t: float):
    """(x, y, heading) at time t, linear in position, shortest-arc in heading."""
    ts = samples[:, 0]
    t = float(np.clip(t, ts[0], ts[-1]))
    k = int(np.searchsorted(ts, t, side="right")) - 1
    k = min(max(k, 0), len(ts) - 2)
    span = ts[k + 1] - ts[k]
    alpha = (t - ts[k]) / span
    x = samples[k, 1] + alpha * (samples[k + 1, 1] - samples[k, 1])
    y = samples[k, 2] + alpha * (samples[k + 1, 2] - samples[k, 2])
    heading = interpolate_yaw(samples[k, 3], samples[k + 1, 3], alpha)
    return x, y, heading


def trajectory_to_root_motion(traj: HumanTrajectory, frame_dt: float) -> list[RigidTransform]:
    """One SE(3) root pose per frame: yaw about +z, translation in the ground plane."""
    if frame_dt <= 0:
        raise ValueError("frame_dt must be positive")
    if traj.duration < frame_dt:
        raise ValueError("trajectory shorter than one frame")
    n_frames = int(np.floor(traj.duration / frame_dt + 1e-9)) + 1
    poses = []
    for k in range(n_frames):
        x, y, heading = _interp_pose(traj.samples, k * frame_dt)
        poses.append(RigidTransform.from_yaw(heading, np.array([x, y, 0.0])))
    return poses


def root_pose_at(motion: list[RigidTransform], t: float, frame_dt: float):
    """Interpolated (x, y, yaw) between stored frames; clamped at the ends."""
    if not motion:
        raise ValueError("empty root motion")
    if t < -1e-9 or t > (len(motion) - 1) * frame_dt + 1e-9:
        raise ValueError(f"t={t} outside animated range")
    t = min(max(t, 0.0), (len(motion) - 1) * frame_dt)
    k = min(int(np.floor(t / frame_dt + 1e-9)), len(motion) - 2) if len(motion) > 1 else 0
    a, b = motion[k], motion[min(k + 1, len(motion) - 1)]
    alpha = (t - k * frame_dt) / frame_dt if len(motion) > 1 else 0.0
    alpha = min(max(alpha, 0.0), 1.0)
    ta, tb = a.translation, b.translation
    yaw_a = float(np.arctan2(a.rotation[1, 0], a.rotation[0, 0]))
    yaw_b = float(np.arctan2(b.rotation[1, 0], b.rotation[0, 0]))
    x = ta[0] + alpha * (tb[0] - ta[0])
    y = ta[1] + alpha * (tb[1] - ta[1])
    return x, y, interpolate_yaw(yaw_a, yaw_b, alpha)


def human_prims_at(
    model: HumanModel, motion: list[RigidTransform], t: float, frame_dt: float
) -> GaussianSet:
    """Canonical splats placed at the interpolated root pose for time t."""
    x, y, yaw = root_pose_at(motion, t, frame_dt)
    pose = RigidTransform.from_yaw(yaw, np.array([x, y, 0.0]))
    return transform_gaussians(model.gaussians, pose)


@dataclass
class AnimatedHuman:
    """A human model bound to its planned motion; episode-time queries clamp
    to the trajectory (the human holds its final pose after arriving)."""

    model: HumanModel
    motion: list[RigidTransform]
    frame_dt: float
    trajectory: HumanTrajectory | None = None

    @property
    def duration(self) -> float:
        return (len(self.motion) - 1) * self.frame_dt

    def _clamp(self, t: float) -> float:
        return min(max(t, 0.0), self.duration)

    def prims_at(self, t: float) -> GaussianSet:
        return human_prims_at(self.model, self.motion, self._clamp(t), self.frame_dt)

    def root_at(self, t: float):
        return root_pose_at(self.motion, self._clamp(t), self.frame_dt)
