import numpy as np
import pytest

from qpms.engine import SorterConfig
from qpms.modes import SpatialGrid, TemporalGrid


@pytest.fixture(scope="session")
def sgrid():
    return SpatialGrid()


@pytest.fixture(scope="session")
def tgrid():
    return TemporalGrid()


@pytest.fixture(scope="session")
def config():
    """Default sorter: 128x128 over 900 um, 512 samples over 40 ps, 2 ps pulses, 2.5 cm crystal."""
    return SorterConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
