import warnings

import numpy as np
import pytest

from minkwave import geometry as geo

warnings.filterwarnings("ignore", message="interface width")


@pytest.fixture(scope="session")
def circle_chart():
    """Collapsing-circle chart with the sweep's default tube."""
    loop = geo.collapsing_circle_loop()
    return geo.build_chart(loop, -0.45, 0.45, rho=0.3, y0_margin=0.3)


@pytest.fixture(scope="session")
def wobbly_chart():
    loop = geo.wobbly_loop()
    return geo.build_chart(loop, -0.4, 0.4, rho=None, y0_margin=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
