"""Shared fixtures: a seeded generator, the service graph and random-point factories."""

import numpy as np
import pytest

from services.limits_service import LimitsService
from services.sampling_service import SamplingService


@pytest.fixture
def rng():
    """Fresh generator with a fixed seed for every test."""
    return np.random.default_rng(20240517)


@pytest.fixture(scope="session")
def limits():
    return LimitsService()


@pytest.fixture(scope="session")
def redpoisson(limits):
    return limits.redpoisson


@pytest.fixture(scope="session")
def dynamics(limits):
    return limits.dynamics


@pytest.fixture(scope="session")
def reduction(limits):
    return limits.reduction


@pytest.fixture(scope="session")
def double(reduction):
    return reduction.double


@pytest.fixture(scope="session")
def spins(reduction):
    return reduction.spins


@pytest.fixture(scope="session")
def linalg(reduction):
    return reduction.linalg


@pytest.fixture(scope="session")
def poisson(redpoisson):
    return redpoisson.poisson


@pytest.fixture(scope="session")
def sampling(reduction):
    return SamplingService(reduction)


@pytest.fixture
def make_slice_point(rng, sampling):
    """Factory for random gauge-slice states built from admissible chart data."""
    def factory(n=3, d=2, gamma=0.5):
        return sampling.random_slice_point(rng, n, d, gamma)
    return factory


@pytest.fixture
def small_normal_form_state(reduction):
    """n = 3, d = 2, γ = 0.5 slice state from a normal form with moderate velocities."""
    pt = reduction.normal_form_d(np.array([0.8, 0.2, 0.05]), 0.5, 2)
    return reduction.to_gauge_slice(pt)
