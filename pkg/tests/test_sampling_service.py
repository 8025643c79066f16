"""Tests for the seeded random constructors."""

import numpy as np
import pytest

from errors import SamplingError
from services.linalg_service import min_angular_gap
from services.sampling_service import spawn_generators


def test_spawned_generators_are_reproducible():
    first = [g.standard_normal() for g in spawn_generators(7, 4)]
    second = [g.standard_normal() for g in spawn_generators(7, 4)]
    assert first == second
    assert len(set(first)) == 4


def test_random_spins_shape(sampling, rng):
    W = sampling.random_spins(rng, 5, 3)
    assert W.shape == (3, 5)
    assert W.dtype == complex


@pytest.mark.parametrize("n", [1, 2, 6])
def test_random_angles_are_separated(sampling, rng, n):
    q = sampling.random_angles(rng, n)
    assert q.shape == (n,)
    assert np.all(q > -np.pi) and np.all(q <= np.pi)
    assert min_angular_gap(q) >= 0.3 - 1e-12


def test_random_angles_rejects_crowding(sampling, rng):
    with pytest.raises(SamplingError):
        sampling.random_angles(rng, 30)


def test_random_chart_is_admissible(sampling, spins, rng):
    q, p, W = sampling.random_chart(rng, 3, 2, 0.4)
    assert spins.phi_residual(W, np.full(3, 0.4)) < 1e-8
    assert p.shape == (3,)


def test_random_normal_form_y_is_admissible(sampling, reduction, rng):
    y = sampling.random_normal_form_y(rng, 4, 0.5)
    reduction.check_normal_form_y(y, 0.5)
    assert np.all(np.diff(y) < 0)


def test_random_s1_coords(sampling, rng):
    coords = sampling.random_s1_coords(rng, 3, 2, 0.5)
    assert coords.v_rest.shape == (1, 3)
    assert np.all(coords.v_rest[0].real > 0)
    with pytest.raises(SamplingError):
        sampling.random_s1_coords(rng, 3, 1, 0.5)
