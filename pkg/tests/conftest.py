import numpy as np
import pytest

from netrobust.lti import FrequencyPoint
from netrobust.scenario import build_platoon, synthetic_identification
from netrobust.uncertainty import factorize_closed_loop

FREQS_HZ = (0.13, 0.15, 0.17)


@pytest.fixture(scope="session")
def platoon():
    return build_platoon(5, seed=0)


@pytest.fixture(scope="session")
def platoon_ellipsoids(platoon):
    """Fixed synthetic ellipsoids, estimates off the truth."""
    return synthetic_identification(platoon, 0.05, seed=0)


@pytest.fixture(scope="session")
def centered_ellipsoids(platoon):
    return synthetic_identification(platoon, 0.05, seed=0, centered=True)


@pytest.fixture(scope="session")
def module1(platoon, platoon_ellipsoids):
    """Module-1 factorization at 0.15 Hz with its ellipsoid."""
    f = factorize_closed_loop(platoon.plant, platoon.K, FrequencyPoint.from_hz(0.15))
    return f, platoon_ellipsoids[0]


def rng(seed=0):
    return np.random.default_rng(seed)
