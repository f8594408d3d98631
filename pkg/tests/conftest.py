import numpy as np
import pytest

from leachsim.coeff_table import tabulate
from leachsim.geometry import RadiusBounds


@pytest.fixture(scope="session")
def table16():
    """Five-knot table on a 16^3 cell grid, shared by the macro-scale tests."""
    return tabulate(RadiusBounds(0.05, 0.45), 5, 16, workers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
