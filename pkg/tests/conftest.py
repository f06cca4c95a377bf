import numpy as np
import pytest

from gsnav.config import SimConfig
from gsnav.splats import GaussianSet
from gsnav.voxelgrid import OccupancyGrid2D


def random_gaussians(rng, n, center=(0.0, 0.0, 0.0), extent=3.0, scale_range=(0.05, 0.4)):
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianSet(
        means=rng.uniform(-extent, extent, (n, 3)) + np.asarray(center),
        quats=quats,
        scales=rng.uniform(*scale_range, (n, 3)),
        opacities=rng.uniform(0.05, 1.0, n),
        colors=rng.uniform(0.0, 1.0, (n, 3)),
    )


def grid_from_mask(mask, resolution=0.1, origin=(0.0, 0.0), inflate_radius=None):
    """Occupancy grid from a boolean [ix, iy] mask (inflated == occupied unless asked)."""
    from gsnav.voxelgrid import inflate

    mask = np.asarray(mask, dtype=bool)
    grid = OccupancyGrid2D(
        origin=np.asarray(origin, dtype=float),
        resolution=resolution,
        dims=mask.shape,
        occupied=mask.copy(),
        inflated=mask.copy(),
    )
    if inflate_radius is not None:
        grid = inflate(grid, inflate_radius)
    return grid


def random_obstacle_grid(rng, dims=(50, 50), resolution=0.1, fill=0.04, inflate_radius=None):
    mask = rng.random(dims) < fill
    return grid_from_mask(mask, resolution=resolution, inflate_radius=inflate_radius)


@pytest.fixture(scope="session")
def sim_config():
    return SimConfig()


@pytest.fixture(scope="session")
def small_assets(sim_config):
    """A compact connected arena shared by episode-level tests."""
    from gsnav.synthetic import make_connected_scene

    return make_connected_scene(sim_config, n_clusters=6, extent=8.0, seed=5)
