"""Tests for the spin space bracket, its moment map and the unit-ball variant."""

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis.strategies import integers

from errors import BallBoundaryError, ConstraintViolationError, DimensionError
from services.spin_service import g_factors, sgn_matrix


def random_w(rng, n):
    return 0.8 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def test_g_factors_and_sign_matrix():
    w = np.array([1.0, 1.0j, 2.0])
    assert np.allclose(g_factors(w), [7.0, 6.0, 5.0, 1.0])
    assert np.array_equal(sgn_matrix(3), [[0, -1, -1], [1, 0, -1], [1, 1, 0]])


def test_tensor_at_origin_is_canonical(spins):
    P = spins.zak_tensor(np.zeros(2))
    expected = np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
    assert np.allclose(P, expected)
    assert np.allclose(spins.symplectic_form(np.zeros(2)) @ P, np.eye(4))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_jacobi_identity(spins, poisson, rng, n):
    w = random_w(rng, n)
    x = np.concatenate([w.real, w.imag])
    assert np.max(np.abs(poisson.jacobiator(spins.zak_tensor_real, x))) < 1e-8
    assert poisson.antisymmetry_violation(spins.zak_tensor(w)) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_symplectic_form_inverts_tensor(spins, rng, n):
    w = random_w(rng, n)
    assert np.max(np.abs(spins.symplectic_form(w) @ spins.zak_tensor(w) - np.eye(2 * n))) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_linear_bracket_matches_tensor(spins, rng, n):
    w, xi, eta = random_w(rng, n), random_w(rng, n), random_w(rng, n)
    via_tensor = spins.real_gradient(xi) @ spins.zak_tensor(w) @ spins.real_gradient(eta)
    assert spins.bracket_linear(w, xi, eta) == pytest.approx(via_tensor, rel=1e-10, abs=1e-12)


def test_gradient_conversions_invert(spins, rng):
    eta = random_w(rng, 3)
    assert np.allclose(spins.complex_gradient(spins.real_gradient(eta)), eta)


@hyp_settings(max_examples=25, deadline=None)
@given(integers(min_value=1, max_value=5), integers(min_value=0, max_value=2**32 - 1))
def test_moment_map_factorization(spins, n, seed):
    w = random_w(np.random.default_rng(seed), n)
    b = spins.moment_b(w)
    assert np.allclose(np.tril(b, -1), 0.0)
    assert np.all(np.diag(b).real > 0)
    assert spins.moment_residual(w) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_moment_property_and_covariance(spins, linalg, rng, n):
    w, xi, eta = random_w(rng, n), random_w(rng, n), random_w(rng, n)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    assert spins.moment_property_residual(w, xi, A - A.conj().T) < 1e-8
    g = linalg.random_unitary(n, rng)
    assert spins.covariance_residual(g, w, xi, eta) < 1e-10


def test_moduli_commute(spins, rng):
    assert spins.modulus_commutator(random_w(rng, 4)) < 1e-12


@pytest.mark.parametrize("level", [0.2, 0.5, 1.3])
def test_admissible_spins_reach_level(spins, rng, level):
    W = random_w(rng, 6).reshape(2, 3)
    A = spins.admissible_spins(W, level)
    phi = spins.torus_phi(A)
    assert np.allclose(phi, level, atol=1e-10)
    assert spins.phi_residual(A, phi) < 1e-10
    assert spins.phi_bound_gap(A) >= 0.0


def test_rescaling_rejects_spinless_particle(spins):
    with pytest.raises(ConstraintViolationError):
        spins.torus_rescaling(np.array([[1.0, 0.0]]), 0.5)


def test_ball_variant(spins, poisson, rng):
    w = random_w(rng, 3)
    z = w / (2.0 * np.linalg.norm(w))
    P, b_minus = spins.minus_variant(z)
    assert poisson.antisymmetry_violation(P) < 1e-12
    assert np.allclose(b_minus @ b_minus.conj().T, np.eye(3) - np.outer(z, z.conj()), atol=1e-12)
    y = np.concatenate([z.real, z.imag])
    assert np.max(np.abs(poisson.jacobiator(spins.minus_tensor_real, y))) < 1e-8


def test_ball_variant_rejects_boundary_and_shape(spins):
    with pytest.raises(BallBoundaryError):
        spins.minus_variant(np.array([0.6, 0.8]))
    with pytest.raises(DimensionError):
        spins.minus_variant(np.zeros((2, 2)))
