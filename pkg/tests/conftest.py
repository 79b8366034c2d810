import numpy as np
import pytest

from coragp.config import load_config


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_config():
    return load_config("tiny")


@pytest.fixture(scope="session")
def paperv_config():
    return load_config("paperV")
