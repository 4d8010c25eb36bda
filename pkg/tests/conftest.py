import numpy as np
import pytest

from tilecascade import Grid, build_schedule


@pytest.fixture(scope="session")
def sched():
    return build_schedule()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240901)


def random_grid(rng, channels=4, height=16, width=16, scale=1.0):
    return Grid.from_array(rng.normal(size=(channels, height, width)) * scale)
