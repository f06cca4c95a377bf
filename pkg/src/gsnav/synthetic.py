"""Procedural splat scenes for tests, demos, and desk-scale benchmarks.

Scenes are walled arenas scattered with box-like splat clusters. The
connected variant regenerates until the robot-navigable free space forms a
single component, so randomly sampled endpoint pairs are always mutually
reachable.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .config import SimConfig
from .episode import SceneAssets, build_maps
from .splats import GaussianSet, SplatScene


def _face_points(rng, corner, u_vec, v_vec, spacing: float, jitter: float) -> np.ndarray:
    """Jittered grid of points on the parallelogram corner + s*u + t*v."""
    u_len = np.linalg.norm(u_vec)
    v_len = np.linalg.norm(v_vec)
    nu = max(2, int(np.ceil(u_len / spacing)) + 1)
    nv = max(2, int(np.ceil(v_len / spacing)) + 1)
    ss, tt = np.meshgrid(np.linspace(0, 1, nu), np.linspace(0, 1, nv), indexing="ij")
    pts = (
        corner[None, :]
        + ss.reshape(-1, 1) * u_vec[None, :]
        + tt.reshape(-1, 1) * v_vec[None, :]
    )
    return pts + rng.normal(0.0, jitter, pts.shape)


def _box_splats(rng, center_xy, size, height, yaw, color, spacing=0.08, jitter=0.01):
    """Splat means on the four side faces and the top of a yawed box."""
    w, d = size
    ct, st = np.cos(yaw), np.sin(yaw)
    ex = np.array([ct, st, 0.0]) * (w / 2)
    ey = np.array([-st, ct, 0.0]) * (d / 2)
    ez = np.array([0.0, 0.0, height])
    c = np.array([center_xy[0], center_xy[1], 0.0])
    faces = [
        (c - ex - ey, 2 * ex, ez),
        (c - ex + ey, 2 * ex, ez),
        (c - ex - ey, 2 * ey, ez),
        (c + ex - ey, 2 * ey, ez),
        (c - ex - ey + ez, 2 * ex, 2 * ey),  # top
    ]
    pts = np.concatenate([_face_points(rng, *f, spacing, jitter) for f in faces])
    colors = np.tile(color, (len(pts), 1)) * rng.uniform(0.85, 1.0, (len(pts), 1))
    return pts, colors


def make_synthetic_scene(
    n_clusters: int = 20,
    extent: float = 12.0,
    seed: int = 0,
    wall_height: float = 0.6,
    with_ground_noise: bool = False,
    paired_fraction: float = 1.0 / 3.0,
    cluster_size: tuple[float, float] = (0.4, 0.7),
    name: str | None = None,
) -> SplatScene:
    """Walled arena with `n_clusters` box-like splat clusters; ground_z = 0.

    With `with_ground_noise`, sparse low-opacity floor splats are added;
    their per-voxel opacity sums stay below the default threshold, so they
    render but are filtered out of the occupancy maps.
    """
    rng = np.random.default_rng([seed, 424242])
    half = extent / 2.0
    means, colors = [], []

    wall_color = np.array([0.55, 0.55, 0.6])
    for axis, sign in ((0, -1), (0, 1), (1, -1), (1, 1)):
        if axis == 0:
            corner = np.array([sign * half, -half, 0.0])
            u = np.array([0.0, extent, 0.0])
        else:
            corner = np.array([-half, sign * half, 0.0])
            u = np.array([extent, 0.0, 0.0])
        pts = _face_points(rng, corner, u, np.array([0.0, 0.0, wall_height]), 0.08, 0.01)
        means.append(pts)
        colors.append(np.tile(wall_color, (len(pts), 1)))

    # Jittered sparse lattice: clusters occupy a subset of sites (some sites
    # take a pair), leaving plazas and multiple corridors so detours around
    # transient blockages exist.
    margin = 0.9
    usable = extent - 2 * margin
    n_cols = int(np.ceil(np.sqrt(n_clusters)))
    n_rows = int(np.ceil(n_clusters / n_cols))
    sites = [
        np.array(
            [
                -half + margin + (i + 0.5) * usable / n_cols,
                -half + margin + (j + 0.5) * usable / n_rows,
            ]
        )
        for i in range(n_cols)
        for j in range(n_rows)
    ]
    n_paired = max(0, min(len(sites) // 2, int(n_clusters * paired_fraction / 2.0 + 0.5)))
    n_single = n_clusters - 2 * n_paired
    order = rng.permutation(len(sites))
    centers = []
    for k in order[:n_paired]:
        offset = rng.uniform(0.25, 0.45) * rng.choice([-1.0, 1.0], size=2)
        centers.append(sites[k] + offset)
        centers.append(sites[k] - offset)
    for k in order[n_paired : n_paired + n_single]:
        centers.append(sites[k] + rng.uniform(-0.25, 0.25, size=2))
    for c in centers:
        size = rng.uniform(cluster_size[0], cluster_size[1], size=2)
        height = rng.uniform(0.5, 1.0)
        yaw = rng.uniform(0, np.pi)
        color = rng.uniform(0.2, 0.9, size=3)
        pts, cols = _box_splats(rng, c, size, height, yaw, color)
        means.append(pts)
        colors.append(cols)

    means = np.concatenate(means)
    colors = np.clip(np.concatenate(colors), 0.0, 1.0)
    n = len(means)
    scales = np.full((n, 3), 0.05)
    opacities = np.full(n, 0.95)

    if with_ground_noise:
        nx = int(extent / 0.25)
        gx, gy = np.meshgrid(
            np.linspace(-half + 0.2, half - 0.2, nx), np.linspace(-half + 0.2, half - 0.2, nx),
            indexing="ij",
        )
        gpts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, 0.02)], axis=1)
        gpts += rng.normal(0.0, 0.02, gpts.shape)
        means = np.concatenate([means, gpts])
        scales = np.concatenate([scales, np.full((len(gpts), 3), 0.06)])
        opacities = np.concatenate([opacities, np.full(len(gpts), 0.35)])
        gcol = np.tile([0.45, 0.42, 0.4], (len(gpts), 1)) * rng.uniform(0.8, 1.1, (len(gpts), 1))
        colors = np.concatenate([colors, np.clip(gcol, 0, 1)])
        n = len(means)

    gaussians = GaussianSet(
        means=means,
        quats=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        scales=scales,
        opacities=np.clip(opacities, 0.0, 1.0),
        colors=colors,
    )
    return SplatScene(
        gaussians=gaussians, ground_z=0.0, name=name or f"synthetic-{seed}"
    )


def make_connected_scene(
    cfg: SimConfig,
    n_clusters: int = 20,
    extent: float = 12.0,
    seed: int = 0,
    max_tries: int = 10,
    min_main_fraction: float = 0.95,
    **scene_kwargs,
) -> SceneAssets:
    """Generate scenes until one free-space component dominates the nav map.

    Dense cluster layouts can pinch off small unreachable pockets; endpoint
    sampling is component-aware, so the requirement here is only that the
    main component holds at least `min_main_fraction` of the free cells.
    """
    for k in range(max_tries):
        scene = make_synthetic_scene(n_clusters, extent, seed=seed + 1000 * k, **scene_kwargs)
        nav, walk = build_maps(scene, cfg)
        free = ~nav.inflated
        labels, n_components = ndimage.label(free, structure=np.ones((3, 3)))
        if not free.any():
            continue
        sizes = np.bincount(labels.ravel())[1:]
        if sizes.max() >= min_main_fraction * free.sum():
            return SceneAssets(name=scene.name, nav_grid=nav, walk_grid=walk, scene=scene)
    raise RuntimeError(f"no connected scene found in {max_tries} tries (seed {seed})")
