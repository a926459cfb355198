import numpy as np
import pytest

from lctrace.subproblem import QuadraticModel
from lctrace.suite import example_region_polyhedron


@pytest.fixture
def example_model():
    # s1^2 - s2^2 in the 0.5 s.H.s convention
    return QuadraticModel(0.0, np.zeros(2), np.diag([2.0, -2.0]))


@pytest.fixture
def example_poly():
    return example_region_polyhedron()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
