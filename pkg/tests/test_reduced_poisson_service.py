"""Tests for the reduced bracket on the gauge slice and the structures derived from it."""

import numpy as np
import pytest

from errors import IndexOutOfRangeError, SpinRSError, UnknownPairError
from models import LaxStructure
from services.reduced_poisson_service import invariant_I, invariant_partials, lax_matrix, swap_matrix


def relative(value, scale):
    return value / max(1.0, scale)


def test_lax_matrix_matches_slice(make_slice_point):
    s = make_slice_point(3, 2, 0.5)
    assert np.allclose(lax_matrix(s.q, s.v, s.gamma), s.L)


def test_coordinate_brackets_with_angles(redpoisson, make_slice_point):
    s = make_slice_point(3, 2, 0.5)
    assert redpoisson.reduced_structure(s, (("q", 0), ("q", 2))) == 0j
    assert redpoisson.reduced_structure(s, (("v", 1, 2), ("q", 2))) == pytest.approx(-s.v[1, 2])
    assert redpoisson.reduced_structure(s, (("q", 2), ("vbar", 1, 2))) == pytest.approx(np.conj(s.v[1, 2]))
    assert redpoisson.reduced_structure(s, (("v", 1, 2), ("q", 0))) == 0j


def test_reduced_structure_rejects_bad_labels(redpoisson, make_slice_point):
    s = make_slice_point(2, 1, 0.5)
    with pytest.raises(UnknownPairError):
        redpoisson.reduced_structure(s, (("p", 0), ("q", 1)))
    with pytest.raises(IndexOutOfRangeError):
        redpoisson.reduced_structure(s, (("v", 1, 0), ("q", 1)))
    with pytest.raises(IndexOutOfRangeError):
        redpoisson.reduced_structure(s, (("q", 2), ("q", 1)))


@pytest.mark.parametrize("n,d,gamma", [(2, 1, 0.5), (3, 1, 0.4), (2, 2, 0.7)])
def test_reduced_tensor_is_poisson(redpoisson, poisson, make_slice_point, n, d, gamma):
    s = make_slice_point(n, d, gamma)
    P = redpoisson.reduced_tensor(s)
    scale = float(np.max(np.abs(P)))
    assert relative(poisson.antisymmetry_violation(P), scale) < 1e-12
    assert relative(redpoisson.reality_violation(s), scale) < 1e-12
    J = poisson.jacobiator(redpoisson.reduced_tensor_fn(n, d, gamma), redpoisson.pack_slice(s))
    assert relative(float(np.max(np.abs(J))), scale ** 2) < 1e-8


def test_pack_unpack_slice(redpoisson, make_slice_point):
    s = make_slice_point(3, 2, 0.5)
    back = redpoisson.unpack_slice(redpoisson.pack_slice(s), 3, 2, 0.5)
    assert np.allclose(back.q, s.q)
    assert np.allclose(back.v, s.v)
    assert np.allclose(back.L, s.L)


def test_bracket_is_tangent_to_slice(redpoisson, make_slice_point):
    n, d = 3, 2
    s = make_slice_point(n, d, 0.5)
    P = redpoisson.reduced_tensor(s)
    im_u = np.zeros((n, P.shape[0]))
    for a in range(d):
        im_u[np.arange(n), n + n * d + a * n + np.arange(n)] = 1.0
    assert relative(float(np.max(np.abs(im_u @ P))), float(np.max(np.abs(P)))) < 1e-10


@pytest.mark.parametrize("n,d", [(2, 1), (3, 2)])
def test_bracket_generates_equations_of_motion(redpoisson, dynamics, make_slice_point, n, d):
    s = make_slice_point(n, d, 0.5)
    qdot, vdot = redpoisson.hamiltonian_flow(s)
    qdot_ref, vdot_ref = dynamics.eom_rhs(s)
    scale = max(float(np.max(np.abs(qdot_ref))), float(np.max(np.abs(vdot_ref))))
    assert relative(float(np.max(np.abs(qdot - qdot_ref))), scale) < 1e-10
    assert relative(float(np.max(np.abs(vdot - vdot_ref))), scale) < 1e-10


def test_weight_homogeneity(redpoisson, make_slice_point, rng):
    s = make_slice_point(3, 2, 0.5)
    assert redpoisson.weight_residual(s, rng.uniform(0.5, 2.0, 3)) < 1e-10


def test_collective_brackets(redpoisson, make_slice_point):
    s = make_slice_point(3, 2, 0.5)
    scale = float(np.max(np.abs(s.F))) ** 2
    for i, j, k, l in [(0, 1, 2, 0), (1, 1, 2, 2), (0, 2, 1, 1), (2, 0, 0, 1)]:
        leibniz = redpoisson.collective_bracket_leibniz(s, i, j, k, l)
        assert relative(abs(redpoisson.collective_bracket(s, i, j, k, l) - leibniz), scale) < 1e-10
    for j, k in [(0, 1), (1, 2), (0, 0)]:
        leibniz = redpoisson.collective_bracket_leibniz(s, j, j, k, k)
        assert relative(abs(redpoisson.diagonal_collective(s, j, k) - leibniz), scale) < 1e-10


def test_collective_bracket_rejects_index(redpoisson, make_slice_point):
    s = make_slice_point(2, 1, 0.5)
    with pytest.raises(IndexOutOfRangeError):
        redpoisson.collective_bracket(s, 0, 1, 2, 0)


@pytest.mark.parametrize("n,d", [(2, 1), (3, 2)])
def test_lax_r_matrix_and_involution(redpoisson, make_slice_point, n, d):
    s = make_slice_point(n, d, 0.6)
    scale = float(np.max(np.abs(s.L)))
    assert relative(redpoisson.lax_check(s), scale ** 2) < 1e-9
    assert relative(redpoisson.trace_involution(s), scale ** 6) < 1e-9


@pytest.mark.parametrize("n,d", [(2, 1), (3, 2)])
def test_lax_structure_is_antisymmetric(redpoisson, make_slice_point, n, d):
    s = make_slice_point(n, d, 0.6)
    structure = redpoisson.lax_structure(s)
    assert isinstance(structure, LaxStructure)
    assert structure.n == n

    P = swap_matrix(n)
    symmetric_part = structure.r12 + P @ structure.r12 @ P
    assert np.allclose(symmetric_part, 2j * P - 1j * np.eye(n * n), atol=1e-12)

    antisymmetry, consistency = redpoisson.lax_structure_violations(s)
    scale = float(np.max(np.abs(s.L)))
    assert relative(antisymmetry, scale ** 2) < 1e-10
    assert consistency < 1e-12


def test_lax_bracket_is_antisymmetric(redpoisson, make_slice_point):
    n = 3
    s = make_slice_point(n, 2, 0.5)
    B = redpoisson.lax_bracket(s)
    P = swap_matrix(n)
    assert relative(float(np.max(np.abs(B + P @ B @ P))), float(np.max(np.abs(s.L))) ** 2) < 1e-10


def test_chart_momenta_are_darboux(redpoisson, make_slice_point):
    qp, pp = redpoisson.chart_block_check(make_slice_point(3, 1, 0.5))
    assert qp < 1e-8
    assert pp < 1e-8


def test_slice_gradient_matches_numeric(redpoisson, poisson, make_slice_point):
    n, d = 3, 2
    s = make_slice_point(n, d, 0.5)
    grad, grad_bar = redpoisson.slice_gradient(s, *invariant_partials(s.L, s.v, 2, 1, 0))

    def fn(y):
        v = (y[n:n + n * d] + 1j * y[n + n * d:]).reshape(d, n)
        return invariant_I(lax_matrix(y[:n], v, s.gamma), v, 2, 1, 0)

    numeric = poisson.numeric_gradient(fn, redpoisson.pack_slice(s))
    # ∂/∂Re v = ∂ + ∂̄ and ∂/∂Im v = i(∂ − ∂̄)
    expected = np.concatenate([grad[:n], grad[n:] + grad_bar[n:], 1j * (grad[n:] - grad_bar[n:])])
    assert np.allclose(numeric, expected, atol=1e-7)


@pytest.mark.parametrize("M,N,indices", [(0, 1, (0, 1, 1, 0)), (1, 2, (0, 0, 1, 1)), (2, 2, (1, 0, 0, 1))])
def test_invariant_algebra_closed_form(redpoisson, make_slice_point, M, N, indices):
    s = make_slice_point(2, 2, 0.5)
    closed = redpoisson.invariant_algebra_bracket(M, N, *indices, s)
    value, scale = redpoisson.invariant_leibniz(M, N, *indices, s)
    assert relative(abs(closed - value), scale) < 1e-9


def test_invariant_algebra_on_unreduced_space(redpoisson, reduction, make_slice_point):
    s = make_slice_point(2, 2, 0.5)
    pt = reduction.slice_to_dressed(s)
    closed = redpoisson.invariant_algebra_bracket(1, 2, 0, 1, 1, 1, s)
    value, scale = redpoisson.unreduced_bracket(pt, redpoisson.unreduced_gradient(pt, "I", 1, 0, 1),
                                                redpoisson.unreduced_gradient(pt, "I", 2, 1, 1))
    assert relative(abs(closed - value), scale) < 1e-9


def test_unreduced_trace_and_spin_brackets(redpoisson, reduction, make_slice_point):
    s = make_slice_point(2, 2, 0.5)
    pt = reduction.slice_to_dressed(s)
    expected = redpoisson.unreduced_f_brackets(pt, 1, 2, 0, 1, 1, 0)

    def bracket(first, second):
        return redpoisson.unreduced_bracket(pt, redpoisson.unreduced_gradient(pt, *first),
                                            redpoisson.unreduced_gradient(pt, *second))

    for key, first, second in [("f_f", ("f", 1), ("f", 2)),
                               ("fs_f", ("fs", 1, 0, 1), ("f", 2)),
                               ("fs_fs", ("fs", 1, 0, 1), ("fs", 2, 1, 0))]:
        value, scale = bracket(first, second)
        assert relative(abs(value - expected[key]), scale) < 1e-9


def test_unreduced_gradient_rejects_kind(redpoisson, reduction, make_slice_point):
    pt = reduction.slice_to_dressed(make_slice_point(2, 1, 0.5))
    with pytest.raises(SpinRSError):
        redpoisson.unreduced_gradient(pt, "h", 1)


def test_invariants_reject_negative_power(redpoisson, make_slice_point):
    s = make_slice_point(2, 1, 0.5)
    assert redpoisson.invariants_I(s, 0, 0, 0) == pytest.approx(np.vdot(s.v[0], s.v[0]))
    with pytest.raises(SpinRSError):
        redpoisson.invariants_I(s, -1, 0, 0)


def test_s1_vector_round_trip(redpoisson, sampling, rng):
    coords = sampling.random_s1_coords(rng, 3, 3, 0.5)
    back = redpoisson.s1_from_vector(redpoisson.s1_vector(coords), 3, 3, 0.5)
    assert np.allclose(back.y, coords.y)
    assert np.allclose(back.v_rest, coords.v_rest)
    assert np.allclose(back.tau_angles, coords.tau_angles)
    assert np.allclose(back.gamma_angles, coords.gamma_angles)


@pytest.mark.parametrize("n,d", [(2, 2), (2, 3), (3, 2)])
def test_jacobian_rank(redpoisson, sampling, rng, n, d):
    coords = sampling.random_s1_coords(rng, n, d, 0.5)
    rank_full, rank_ham = redpoisson.jacobian_rank(coords)
    assert rank_full == 2 * n * d - n
    assert rank_ham == n
