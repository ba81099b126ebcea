import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from roughsys.grid import strip

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def flat16():
    return strip(2, 16)


@pytest.fixture
def flat32():
    return strip(2, 32)
