"""Rigid-body transforms, quaternions, and unicycle kinematics.

Conventions used throughout the package:
  * world frame is +z up, metric meters
  * quaternions are (w, x, y, z), unit norm
  * planar robot heading theta is wrapped to (-pi, pi]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("cannot normalize near-zero quaternion")
    return q / norm


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for unit quaternions; broadcasts over leading axes."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion (w,x,y,z) for a single 3x3 rotation matrix."""
    rot = np.asarray(rot, dtype=float)
    tr = np.trace(rot)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [
                0.25 * s,
                (rot[2, 1] - rot[1, 2]) / s,
                (rot[0, 2] - rot[2, 0]) / s,
                (rot[1, 0] - rot[0, 1]) / s,
            ]
        )
    else:
        i = int(np.argmax(np.diag(rot)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(rot[i, i] - rot[j, j] - rot[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (rot[k, j] - rot[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (rot[j, i] + rot[i, j]) / s
        q[1 + k] = (rot[k, i] + rot[i, k]) / s
    return quat_normalize(q)


def yaw_quat(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


@dataclass(frozen=True)
class RigidTransform:
    """An SE(3) pose: x_world = rotation @ x_local + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_quat(q: np.ndarray, t) -> "RigidTransform":
        return RigidTransform(quat_to_matrix(quat_normalize(q)), np.asarray(t, dtype=float))

    @staticmethod
    def from_yaw(yaw: float, t) -> "RigidTransform":
        return RigidTransform.from_quat(yaw_quat(yaw), t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other)(x) == self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def quat(self) -> np.ndarray:
        return matrix_to_quat(self.rotation)


def interpolate_yaw(a: float, b: float, alpha: float) -> float:
    """Shortest-arc interpolation between two yaw angles."""
    return wrap_angle(a + alpha * wrap_angle(b - a))


def unicycle_step(x: float, y: float, theta: float, v: float, w: float, dt: float):
    """Closed-form constant-(v, w) arc integration over dt."""
    if abs(w) < 1e-12:
        return x + v * np.cos(theta) * dt, y + v * np.sin(theta) * dt, theta
    nt = theta + w * dt
    return (
        x + (v / w) * (np.sin(nt) - np.sin(theta)),
        y - (v / w) * (np.cos(nt) - np.cos(theta)),
        nt,
    )


def arc_end_offset(v: float, w: float, duration: float):
    """(dx, dy, dtheta) of a constant-(v, w) arc in the start frame."""
    if abs(w) < 1e-12:
        return v * duration, 0.0, 0.0
    return (
        (v / w) * np.sin(w * duration),
        (v / w) * (1.0 - np.cos(w * duration)),
        w * duration,
    )


def arc_points(v: float, w: float, duration: float, n: int) -> np.ndarray:
    """n poses (x, y, theta) along an arc in the start frame, at t = duration*k/n for k=1..n."""
    ts = duration * np.arange(1, n + 1) / n
    if abs(w) < 1e-12:
        xs = v * ts
        ys = np.zeros_like(ts)
        ths = np.zeros_like(ts)
    else:
        ths = w * ts
        xs = (v / w) * np.sin(ths)
        ys = (v / w) * (1.0 - np.cos(ths))
    return np.stack([xs, ys, ths], axis=1)


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each 2D point to segment ab."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def point_polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Min distance from each 2D point to a polyline given as (K, 2) vertices."""
    polyline = np.asarray(polyline, dtype=float)
    if polyline.ndim != 2 or len(polyline) == 0:
        raise ValueError("polyline must be a non-empty (K, 2) array")
    if len(polyline) == 1:
        return np.linalg.norm(np.atleast_2d(points) - polyline[0], axis=1)
    dists = [
        point_segment_distance(points, polyline[i], polyline[i + 1])
        for i in range(len(polyline) - 1)
    ]
    return np.min(np.stack(dists, axis=0), axis=0)


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Strict (proper) intersection test for segments p1p2 and q1q2."""
    p1, p2, q1, q2 = (np.asarray(v, dtype=float) for v in (p1, p2, q1, q2))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1 = cross(q1, q2, p1)
    d2 = cross(q1, q2, p2)
    d3 = cross(p1, p2, q1)
    d4 = cross(p1, p2, q2)
    return bool((d1 * d2 < 0) and (d3 * d4 < 0))
