import math

import numpy as np
import pytest

from thzmc.blockage import SystemParams
from thzmc.channel import W1, LinkBudget, bundled_spectrum, db_to_linear, thermal_noise_density


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def spectrum():
    return bundled_spectrum()


@pytest.fixture(scope="session")
def budget():
    # reference link: 20 dBm, 25 dBi at both ends, 20 dB noise figure
    return LinkBudget.from_db(20, 25, 25, n0_density=thermal_noise_density() * db_to_linear(20))


@pytest.fixture(scope="session")
def window():
    return W1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def decreasing_capacity(x):
    """Smooth stand-in channel, bit/s."""
    return 1e11 / np.sqrt(np.asarray(x, dtype=float))


def x_for_los(p_target, params):
    """Distance at which p_L equals ``p_target``."""
    zeta = math.exp(-2 * params.lambda_b * params.r_b ** 2)
    beta = 2 * params.lambda_b * params.r_b * params.slope
    return math.log(zeta / p_target) / beta
