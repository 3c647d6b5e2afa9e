import numpy as np
import pytest

from wheelleg import models


@pytest.fixture(scope="session")
def rig():
    return models.sagittal_rig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(model, rng, vel_scale=1.0):
    q = rng.uniform(-1.0, 1.0, model.nq)
    v = vel_scale * rng.normal(size=model.nv)
    return q, v


def stance_configuration(model):
    """Rig configuration with both wheels on flat ground (z = 0)."""
    from wheelleg.sim.rig import standing_configuration

    return standing_configuration(model)
