"""Pinhole camera model shared by the renderer and the planner's FOV gate.

Camera frame: +x right, +y down, +z forward (optical axis). Poses are
world-to-camera transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    near: float = 0.05

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def hfov(self) -> float:
        return 2.0 * np.arctan(self.width / (2.0 * self.fx))

    def camera_points(self, world_points: np.ndarray) -> np.ndarray:
        return self.pose.apply(world_points)

    def in_fov(self, world_points: np.ndarray) -> np.ndarray:
        """Horizontal-FOV frustum gate: in front of the near plane and within hfov."""
        pts = self.camera_points(world_points)
        ahead = pts[:, 2] > self.near
        ang = np.abs(np.arctan2(pts[:, 0], np.maximum(pts[:, 2], 1e-9)))
        return ahead & (ang <= self.hfov / 2.0 + 1e-12)

    def project(self, world_points: np.ndarray):
        """Pixel coordinates (u, v) and camera-space depth z for each point."""
        pts = self.camera_points(world_points)
        z = pts[:, 2]
        safe_z = np.where(np.abs(z) < 1e-9, 1e-9, z)
        u = self.fx * pts[:, 0] / safe_z + self.cx
        v = self.fy * pts[:, 1] / safe_z + self.cy
        return np.stack([u, v], axis=1), z

    def at_pose(self, pose: RigidTransform) -> "CameraModel":
        return CameraModel(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            width=self.width, height=self.height, pose=pose, near=self.near,
        )


def intrinsics_from_hfov(width: int, height: int, hfov_rad: float) -> CameraModel:
    """Square-pixel intrinsics with the image center as principal point."""
    fx = width / (2.0 * np.tan(hfov_rad / 2.0))
    return CameraModel(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                       width=width, height=height)


def robot_camera_pose(x: float, y: float, theta: float, mount_height: float) -> RigidTransform:
    """World-to-camera pose for a forward-facing camera on the robot."""
    ct, st = np.cos(theta), np.sin(theta)
    rot = np.array(
        [
            [st, -ct, 0.0],   # camera x: robot right
            [0.0, 0.0, -1.0],  # camera y: down
            [ct, st, 0.0],    # camera z: robot forward
        ]
    )
    center = np.array([x, y, mount_height])
    return RigidTransform(rot, -rot @ center)
