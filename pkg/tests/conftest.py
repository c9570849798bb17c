import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from csilab.channel import ChannelConfig, desk_config, synth_sample

settings.register_profile("csilab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("csilab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def small_config():
    return desk_config(n_train=60, n_test=12)


@pytest.fixture(scope="session")
def sample():
    return synth_sample(ChannelConfig(), 12345)
