import numpy as np
import pytest

from perfhom.geometry import PerforationConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small3():
    """3-D torus with 4 periods of 16 cells and holes of relative size 0.4."""
    return PerforationConfig(3, 0.25, 0.1, m=4, n=16, min_hole_cells=0)


@pytest.fixture
def small2():
    return PerforationConfig(2, 0.25, 0.25 * 0.3, m=4, n=32, min_hole_cells=0)
