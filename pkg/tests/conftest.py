"""Shared fixtures and hypothesis settings for the test suite."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_model():
    from seqfusion.model import init_model

    return init_model(
        input_dim=5, l_max=4, hidden_dims=(6,), heads=2, dropout_rate=0.3, seed=7
    )


@pytest.fixture
def tiny_batch(rng):
    from seqfusion.pipeline import PaddedBatch

    data = rng.normal(size=(3, 4, 5))
    valid = np.array([4, 2, 3])
    for i, v in enumerate(valid):
        data[i, v:] = 0.0
    return PaddedBatch(data, valid, np.array([0, 1, 1]))
