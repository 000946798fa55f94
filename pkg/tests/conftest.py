import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from onebit_rf.channel import ChannelRealization, draw_channel
from onebit_rf.numerics import RandomStream

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_channel():
    """B=4, U=2, L=8 Rayleigh channel."""
    return draw_channel(4, 2, 8, RandomStream(7, 0))


def identity_channel(B: int) -> ChannelRealization:
    return ChannelRealization(np.eye(B, dtype=complex)[None])


SMALL = dict(B=4, U=2, N=256, occupied_set=(254, 255, 0, 1, 2), L=8, f_c=2.4e9, f_s=10e9,
             n_channels=3, n_symbols=2, psd_segment_len=128)


@pytest.fixture(scope="session")
def small_kwargs():
    return dict(SMALL)


@pytest.fixture
def small_cfg():
    from onebit_rf.harness.config import ExperimentConfig

    return ExperimentConfig(**SMALL)
