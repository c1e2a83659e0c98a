import numpy as np
import pytest

from loewner_lab import DrivingFunction


@pytest.fixture
def sine_driver():
    return DrivingFunction.from_callable(np.sin, np.pi, 1e-3)


def random_driver(rng, n_knots=5, T=1.0, scale=1.0):
    t = np.sort(rng.uniform(0.0, T, n_knots - 1))
    t = np.concatenate([[0.0], t, [T]])
    t = np.unique(t)
    v = np.concatenate([[0.0], scale * rng.standard_normal(t.size - 1)])
    return DrivingFunction(t, v)
