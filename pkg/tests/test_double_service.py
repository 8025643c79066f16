"""Tests for the Heisenberg double and the extended (g, L, v) phase space."""

import numpy as np
import pytest

from errors import DimensionError, IndexOutOfRangeError, SpinRSError, UnknownPairError


def random_point(double, linalg, rng, n):
    return double.make_point(linalg.random_unitary(n, rng), linalg.random_upper_positive(n, rng))


def random_v(rng, d, n):
    return 0.7 * (rng.standard_normal((d, n)) + 1j * rng.standard_normal((d, n)))


def test_point_from_K_recovers_factors(double, linalg, rng):
    point = random_point(double, linalg, rng, 3)
    K = linalg.reconstruct_K(point.g_R, point.b_R)
    again = double.point_from_K(K)
    assert np.allclose(again.g_R, point.g_R, atol=1e-10)
    assert np.allclose(again.b_R, point.b_R, atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_left_right_factors(double, linalg, rng, n):
    assert double.t13_residual(random_point(double, linalg, rng, n)) < 1e-10


@pytest.mark.parametrize("n,d", [(1, 1), (2, 1), (2, 2)])
def test_structure_matrices_are_consistent(double, poisson, linalg, rng, n, d):
    point = random_point(double, linalg, rng, n)
    C, D, real_mask = double.structure_matrices(point.g_R, point.L, random_v(rng, d, n))
    assert double.reality_violation(C, D, real_mask) < 1e-12
    assert poisson.antisymmetry_violation(poisson.complex_to_real(C, D, real_mask)) < 1e-12


@pytest.mark.parametrize("n,d", [(1, 1), (2, 1), (2, 2)])
def test_extended_jacobi_identity(double, poisson, linalg, rng, n, d):
    point = random_point(double, linalg, rng, n)
    x = double.pack_extended(point.g_R, point.L, random_v(rng, d, n))
    assert np.max(np.abs(poisson.jacobiator(double.extended_tensor_fn(n, d), x))) < 1e-8


def test_pack_unpack_extended(double, linalg, rng):
    point = random_point(double, linalg, rng, 3)
    v = random_v(rng, 2, 3)
    g, L, v_back = double.unpack_extended(double.pack_extended(point.g_R, point.L, v), 3, 2)
    assert np.allclose(g, point.g_R)
    assert np.allclose(L, point.L)
    assert np.allclose(v_back, v)


def test_g_L_bracket_by_leibniz(double, linalg, rng):
    n = 2
    point = random_point(double, linalg, rng, n)
    v = random_v(rng, 1, n)
    for l in range(n):
        for m in range(n):
            for j in range(n):
                for k in range(n):
                    closed = double.extended_structure(point, v, (("g", l, m), ("L", j, k)))
                    assert closed == pytest.approx(double.g_L_from_gb(point.g_R, point.b_R, l, m, j, k), abs=1e-11)


def test_bracket_antisymmetry_across_kinds(double, linalg, rng):
    point = random_point(double, linalg, rng, 2)
    v = random_v(rng, 2, 2)
    pairs = [(("g", 0, 1), ("vbar", 1, 0)), (("Lbar", 0, 1), ("v", 0, 1)), (("v", 1, 0), ("g", 1, 1))]
    for a, b in pairs:
        forward = double.extended_structure(point, v, (a, b))
        backward = double.extended_structure(point, v, (b, a))
        assert forward == pytest.approx(-backward, abs=1e-12)


def test_extended_structure_rejects_bad_labels(double, linalg, rng):
    point = random_point(double, linalg, rng, 2)
    v = random_v(rng, 1, 2)
    with pytest.raises(UnknownPairError):
        double.extended_structure(point, v, (("x", 0, 0), ("g", 0, 0)))
    with pytest.raises(IndexOutOfRangeError):
        double.extended_structure(point, v, (("v", 1, 0), ("g", 0, 0)))
    with pytest.raises(DimensionError):
        double.extended_structure(point, random_v(rng, 1, 3), (("g", 0, 0), ("g", 0, 1)))


def test_coordinate_level_errors(double, linalg, rng):
    g = linalg.random_unitary(2, rng)
    b = linalg.random_upper_positive(2, rng)
    with pytest.raises(UnknownPairError):
        double.heis_structure_gb(g, b, 0, 0, 0, 0, variant="bg")
    with pytest.raises(IndexOutOfRangeError):
        double.drinfeld_structure(g @ b, 0, 2, 0, 0)


def test_dressing_conjugates_gram_matrix(double, linalg, rng):
    h = linalg.random_unitary(3, rng)
    b = linalg.random_upper_positive(3, rng)
    dressed = double.dress(h, b)
    assert np.allclose(dressed @ dressed.conj().T, h @ b @ b.conj().T @ h.conj().T, atol=1e-11)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_free_flow(double, linalg, rng, k):
    point = random_point(double, linalg, rng, 3)
    W = random_v(rng, 2, 3)
    flowed, W_t = double.free_flow(point, W, k, 0.8)
    assert np.allclose(flowed.g_R @ flowed.g_R.conj().T, np.eye(3), atol=1e-12)
    assert np.array_equal(flowed.b_R, point.b_R)
    assert W_t is W
    back, _ = double.free_flow(flowed, W, k, -0.8)
    assert np.allclose(back.g_R, point.g_R, atol=1e-10)


def test_flow_generator_errors(double):
    L = np.eye(2)
    with pytest.raises(SpinRSError):
        double.flow_generator(L, hamiltonian="rs")
    with pytest.raises(UnknownPairError):
        double.flow_generator(L, hamiltonian="h_x")
    with pytest.raises(IndexOutOfRangeError):
        double.flow_generator(L, k=3)
    assert np.allclose(double.flow_generator(L, hamiltonian="rs", gamma=0.5), 2j * np.expm1(1.0) * L)


@pytest.mark.parametrize("d,n", [(1, 2), (2, 2), (2, 3)])
def test_half_dressed_chain_rule(double, rng, d, n):
    assert double.half_dressed_chain_rule(random_v(rng, d, n)) < 1e-8
