"""Opacity-filtered voxelization of splat scenes and 2D occupancy maps.

A voxel accumulates the opacity of every primitive whose 1-sigma ellipsoid
intersects the voxel box; voxels are occupied when the sum exceeds a
threshold, which suppresses low-opacity floaters near the ground. The 3D
grid is then projected over height bands into per-planner 2D maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

from .splats import EmptySceneError, GaussianSet, SplatScene


@numba.njit(cache=True)
def _window_free(points, inflated, ox, oy, res, radius, out):
    """Exact lattice scan: no inflated (or out-of-grid) cell center within radius."""
    nx, ny = inflated.shape
    w = int(np.ceil(radius / res)) + 1
    r2 = radius * radius + 1e-12
    for k in range(len(points)):
        px = points[k, 0]
        py = points[k, 1]
        bi = int(np.floor((px - ox) / res))
        bj = int(np.floor((py - oy) / res))
        ok = True
        for di in range(-w, w + 1):
            ci = bi + di
            for dj in range(-w, w + 1):
                cj = bj + dj
                cx = ox + (ci + 0.5) * res
                cy = oy + (cj + 0.5) * res
                d2 = (cx - px) * (cx - px) + (cy - py) * (cy - py)
                if d2 > r2:
                    continue
                if ci < 0 or ci >= nx or cj < 0 or cj >= ny or inflated[ci, cj]:
                    ok = False
                    break
            if not ok:
                break
        out[k] = ok

ROBOT_NAVIGABLE = "robot-navigable"
HUMAN_WALKABLE = "human-walkable"


@dataclass
class VoxelGrid:
    origin: np.ndarray  # min corner (m)
    resolution: float
    dims: tuple[int, int, int]
    opacity_sum: np.ndarray  # (nx, ny, nz)
    occupied: np.ndarray  # bool (nx, ny, nz)
    opacity_threshold: float

    def centers_z(self) -> np.ndarray:
        return self.origin[2] + (np.arange(self.dims[2]) + 0.5) * self.resolution

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            origin=self.origin,
            resolution=self.resolution,
            dims=np.asarray(self.dims),
            opacity_sum=self.opacity_sum.astype(np.float32),
            occupied=self.occupied,
            opacity_threshold=self.opacity_threshold,
        )

    @staticmethod
    def load(path) -> "VoxelGrid":
        data = np.load(path)
        return VoxelGrid(
            origin=data["origin"],
            resolution=float(data["resolution"]),
            dims=tuple(int(d) for d in data["dims"]),
            opacity_sum=data["opacity_sum"].astype(float),
            occupied=data["occupied"],
            opacity_threshold=float(data["opacity_threshold"]),
        )


@dataclass
class OccupancyGrid2D:
    """2D occupancy map; `inflated` is `occupied` dilated by a safety radius.

    Cells are indexed [ix, iy]; cell (i, j) is centered at
    origin + (i + 0.5, j + 0.5) * resolution. Cells outside the grid are
    treated as occupied (unknown space is unsafe).
    """

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int]
    occupied: np.ndarray
    inflated: np.ndarray
    kind: str = ROBOT_NAVIGABLE
    inflation_radius: float = 0.0

    def cell_of(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((points - self.origin) / self.resolution).astype(int)

    def cell_centers(self, cells) -> np.ndarray:
        return self.origin + (np.asarray(cells, dtype=float) + 0.5) * self.resolution

    def in_bounds(self, cells) -> np.ndarray:
        cells = np.atleast_2d(cells)
        return (
            (cells[:, 0] >= 0)
            & (cells[:, 0] < self.dims[0])
            & (cells[:, 1] >= 0)
            & (cells[:, 1] < self.dims[1])
        )

    def is_free_inflated(self, points) -> np.ndarray:
        """Per point: inside the grid and in a non-inflated cell."""
        cells = self.cell_of(points)
        ok = self.in_bounds(cells)
        out = np.zeros(len(cells), dtype=bool)
        idx = cells[ok]
        out[ok] = ~self.inflated[idx[:, 0], idx[:, 1]]
        return out

    def free_for_radius(self, points, radius: float) -> np.ndarray:
        """Per point: no inflated cell center within `radius` (exact lattice scan).

        This is the collision predicate shared by the planner, the episode
        loop, and the step service. Out-of-grid cells count as inflated.
        """
        points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        out = np.empty(len(points), dtype=np.bool_)
        _window_free(
            points,
            self.inflated,
            float(self.origin[0]),
            float(self.origin[1]),
            float(self.resolution),
            float(radius),
            out,
        )
        return out

    def clearance_field(self) -> np.ndarray:
        """Distance (m) from each cell center to the nearest occupied cell center."""
        if not self.occupied.any():
            return np.full(self.dims, np.inf)
        return ndimage.distance_transform_edt(~self.occupied) * self.resolution

    def inflated_clearance(self) -> np.ndarray:
        """Distance (m) from each cell center to the nearest inflated cell center."""
        if not self.inflated.any():
            return np.full(self.dims, np.inf)
        return ndimage.distance_transform_edt(~self.inflated) * self.resolution

    def copy(self) -> "OccupancyGrid2D":
        return OccupancyGrid2D(
            origin=self.origin.copy(),
            resolution=self.resolution,
            dims=self.dims,
            occupied=self.occupied.copy(),
            inflated=self.inflated.copy(),
            kind=self.kind,
            inflation_radius=self.inflation_radius,
        )

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            origin=self.origin,
            resolution=self.resolution,
            dims=np.asarray(self.dims),
            occupied=self.occupied,
            inflated=self.inflated,
            kind=self.kind,
            inflation_radius=self.inflation_radius,
        )

    @staticmethod
    def load(path) -> "OccupancyGrid2D":
        data = np.load(path)
        return OccupancyGrid2D(
            origin=data["origin"],
            resolution=float(data["resolution"]),
            dims=tuple(int(d) for d in data["dims"]),
            occupied=data["occupied"],
            inflated=data["inflated"],
            kind=str(data["kind"]),
            inflation_radius=float(data["inflation_radius"]),
        )


def ellipsoid_half_extents(gaussians: GaussianSet) -> np.ndarray:
    """Per-axis half extents of each 1-sigma ellipsoid's AABB: sqrt(diag(Sigma))."""
    covs = gaussians.covariances()
    return np.sqrt(np.maximum(np.diagonal(covs, axis1=1, axis2=2), 0.0))


def _box_min_quadratic(mu, inv_cov, lo, hi, sweeps: int = 10):
    """Min of (x-mu)^T inv_cov (x-mu) over axis-aligned boxes [lo, hi].

    Projected coordinate descent; exact for diagonal inv_cov, converges for
    the general SPD case well within `sweeps` sweeps at voxel scales.
    """
    x = np.clip(mu[None, :], lo, hi)
    for _ in range(sweeps):
        for j in range(3):
            k = [i for i in range(3) if i != j]
            num = (x[:, k] - mu[k]) @ inv_cov[j, k]
            x[:, j] = np.clip(mu[j] - num / inv_cov[j, j], lo[:, j], hi[:, j])
    d = x - mu
    return np.einsum("ni,ij,nj->n", d, inv_cov, d), x


def voxelize(scene, resolution: float, opacity_threshold: float) -> VoxelGrid:
    """Accumulate primitive opacities into voxels intersected by 1-sigma ellipsoids.

    Grid bounds are the AABB of all ellipsoids padded by one voxel. A voxel
    intersects an ellipsoid when the box point closest to the mean under the
    Mahalanobis metric lies strictly inside the unit quadratic level set.
    """
    gaussians = scene.gaussians if isinstance(scene, SplatScene) else scene
    if len(gaussians) == 0:
        raise EmptySceneError("cannot voxelize an empty scene")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if opacity_threshold < 0:
        raise ValueError("opacity_threshold must be non-negative")

    half = ellipsoid_half_extents(gaussians)
    mins = np.min(gaussians.means - half, axis=0) - resolution
    maxs = np.max(gaussians.means + half, axis=0) + resolution
    origin = mins
    dims = tuple(int(np.ceil((maxs[i] - origin[i]) / resolution - 1e-9)) for i in range(3))
    opacity_sum = np.zeros(dims, dtype=float)

    covs = gaussians.covariances()
    for p in range(len(gaussians)):
        mu = gaussians.means[p]
        inv_cov = np.linalg.inv(covs[p])
        lo_idx = np.floor((mu - half[p] - origin) / resolution).astype(int)
        hi_idx = np.floor((mu + half[p] - origin) / resolution).astype(int)
        lo_idx = np.maximum(lo_idx, 0)
        hi_idx = np.minimum(hi_idx, np.asarray(dims) - 1)
        if np.any(hi_idx < lo_idx):
            continue
        ranges = [np.arange(lo_idx[i], hi_idx[i] + 1) for i in range(3)]
        cand = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, 3)
        lo = origin + cand * resolution
        hi = lo + resolution
        qmin, _ = _box_min_quadratic(mu, inv_cov, lo, hi)
        hit = cand[qmin < 1.0]
        if len(hit):
            opacity_sum[hit[:, 0], hit[:, 1], hit[:, 2]] += gaussians.opacities[p]

    return VoxelGrid(
        origin=origin,
        resolution=resolution,
        dims=dims,
        opacity_sum=opacity_sum,
        occupied=opacity_sum > opacity_threshold,
        opacity_threshold=opacity_threshold,
    )


def project_occupancy(grid: VoxelGrid, z_min: float, z_max: float, kind: str) -> OccupancyGrid2D:
    """Column-collapse occupied voxels whose centers fall in [z_min, z_max]."""
    if z_min >= z_max:
        raise ValueError("z_min must be below z_max")
    z_lo = grid.origin[2]
    z_hi = grid.origin[2] + grid.dims[2] * grid.resolution
    if z_max < z_lo or z_min > z_hi:
        raise ValueError(f"height range [{z_min}, {z_max}] does not overlap grid [{z_lo}, {z_hi}]")
    centers = grid.centers_z()
    band = (centers >= z_min) & (centers <= z_max)
    occupied = grid.occupied[:, :, band].any(axis=2)
    return OccupancyGrid2D(
        origin=grid.origin[:2].copy(),
        resolution=grid.resolution,
        dims=(grid.dims[0], grid.dims[1]),
        occupied=occupied,
        inflated=occupied.copy(),
        kind=kind,
    )


def inflate(grid: OccupancyGrid2D, radius: float) -> OccupancyGrid2D:
    """Dilate occupancy: inflated iff some occupied cell center within `radius`."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if grid.occupied.any():
        dist = ndimage.distance_transform_edt(~grid.occupied) * grid.resolution
        inflated = dist <= radius + 1e-9
    else:
        inflated = np.zeros(grid.dims, dtype=bool)
    return OccupancyGrid2D(
        origin=grid.origin.copy(),
        resolution=grid.resolution,
        dims=grid.dims,
        occupied=grid.occupied.copy(),
        inflated=inflated,
        kind=grid.kind,
        inflation_radius=radius,
    )


def write_pgm(mask: np.ndarray, path) -> None:
    """Dump a boolean [ix, iy] mask as a PGM image (row 0 = max y)."""
    img = np.where(mask.T[::-1], 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
