import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_box(rng, grid_w, grid_h, min_dim=1):
    w = int(rng.integers(min_dim, grid_w + 1))
    h = int(rng.integers(min_dim, grid_h + 1))
    x = int(rng.integers(0, grid_w - w + 1))
    y = int(rng.integers(0, grid_h - h + 1))
    from topg.imaging import BoundingBox
    return BoundingBox(x, y, w, h)
