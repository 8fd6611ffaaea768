import numpy as np
import pytest

from pillarhist.core import GridConfig, PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return GridConfig(-4.0, 4.0, -2.0, 6.0, -3.0, 1.0, 0.5, 0.4)


def random_cloud(rng, grid, n, margin=0.5, r_max=1.0):
    """Uniform points over the grid box enlarged by ``margin`` on every side."""
    lo = np.array([grid.x_min - margin, grid.y_min - margin, grid.z_min - margin, 0.0])
    hi = np.array([grid.x_max + margin, grid.y_max + margin, grid.z_max + margin, r_max])
    pts = lo + rng.random((n, 4)) * (hi - lo)
    return PointCloud(pts.astype(np.float32).astype(np.float64), "random")
