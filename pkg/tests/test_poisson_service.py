"""Tests for the generic Poisson tensor plumbing."""

import numpy as np
import pytest


def test_pack_unpack_keeps_real_coordinates_real(poisson):
    mask = np.array([True, False, False])
    values = np.array([0.7, 1.0 - 2.0j, -0.5 + 0.25j])
    x = poisson.pack(values, mask)
    assert x.shape == (5,)
    assert np.allclose(poisson.unpack(x, mask), values)


def test_complex_to_real_canonical(poisson):
    n = 2
    C = np.zeros((n, n), dtype=complex)
    D = 2j * np.eye(n)
    P = poisson.complex_to_real(C, D, np.zeros(n, dtype=bool))
    expected = np.block([[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    assert np.allclose(P, expected)


def test_complex_to_real_drops_imaginary_rows(poisson):
    mask = np.array([True, False])
    C = np.array([[0.0, 1.0j], [-1.0j, 0.0]])
    D = np.array([[0.0, 1.0j], [-1.0j, 0.0]])
    P = poisson.complex_to_real(C, D, mask)
    assert P.shape == (3, 3)


def test_directional_derivative_exact_on_cubics(poisson, rng):
    x = rng.standard_normal(3)
    u = rng.standard_normal(3)
    value = poisson.directional_derivative(lambda y: y[0] ** 3 + y[1] * y[2], x, u)
    assert value == pytest.approx(3 * x[0] ** 2 * u[0] + u[1] * x[2] + x[1] * u[2], abs=1e-8)


def test_directional_derivative_zero_direction(poisson):
    assert np.all(poisson.directional_derivative(lambda y: np.array([y[0], 1.0]), np.ones(2), np.zeros(2)) == 0.0)


def test_numeric_gradient(poisson, rng):
    x = rng.standard_normal(4)
    grad = poisson.numeric_gradient(lambda y: np.sum(y ** 2), x)
    assert np.allclose(grad, 2 * x, atol=1e-10)


def test_jacobiator_vanishes_for_constant_tensor(poisson):
    J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    assert np.max(np.abs(poisson.jacobiator(lambda y: J, np.ones(4)))) == 0.0


def test_jacobiator_detects_failure(poisson):
    def tensor(y):
        return np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, y[1]], [0.0, -y[1], 0.0]])

    J = poisson.jacobiator(tensor, np.array([0.3, -0.4, 1.1]))
    assert J[0, 1, 2] == pytest.approx(1.0, abs=1e-10)
    assert J[1, 2, 0] == pytest.approx(1.0, abs=1e-10)


def test_contract_is_antisymmetric(poisson, rng):
    A = rng.standard_normal((4, 4))
    P = A - A.T
    f, h = rng.standard_normal(4), rng.standard_normal(4)
    assert poisson.contract(P, f, h) == pytest.approx(-poisson.contract(P, h, f))
    assert poisson.antisymmetry_violation(P) == 0.0
    assert poisson.antisymmetry_violation(A) > 0.0


def random_gradient(rng, real_mask):
    m = real_mask.size
    grad = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    grad_bar = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    grad_bar[real_mask] = 0.0
    return grad, grad_bar


def to_real(grad, grad_bar, real_mask):
    return np.concatenate([grad + grad_bar, 1j * (grad - grad_bar)[~real_mask]])


def test_wirtinger_contract_matches_real_coordinates(poisson, redpoisson, make_slice_point, rng):
    C, D, real_mask = redpoisson.structure_matrices(make_slice_point(3, 2, 0.5))
    P = poisson.complex_to_real(C, D, real_mask)
    f = random_gradient(rng, real_mask)
    h = random_gradient(rng, real_mask)
    value = poisson.wirtinger_contract(C, D, *f, *h)
    expected = poisson.contract(P, to_real(*f, real_mask), to_real(*h, real_mask))
    scale = poisson.wirtinger_scale(C, D, *f, *h)
    assert abs(value - expected) < 1e-10 * max(1.0, scale)
    assert abs(value + poisson.wirtinger_contract(C, D, *h, *f)) < 1e-10 * max(1.0, scale)


def test_wirtinger_contract_stacks(poisson, redpoisson, make_slice_point, rng):
    C, D, real_mask = redpoisson.structure_matrices(make_slice_point(2, 1, 0.5))
    grads = [random_gradient(rng, real_mask) for _ in range(3)]
    G = np.array([g for g, _ in grads])
    G_bar = np.array([g for _, g in grads])
    B = poisson.wirtinger_contract(C, D, G, G_bar, G, G_bar)
    assert B.shape == (3, 3)
    assert B[0, 2] == pytest.approx(poisson.wirtinger_contract(C, D, *grads[0], *grads[2]))
    assert np.allclose(B, -B.T, atol=1e-10 * max(1.0, float(np.max(np.abs(B)))))
