"""Tests for constrained points: dressed spins, the gauge slice, the (q, p, W) chart and normal forms."""

import numpy as np
import pytest

from errors import (
    ConstraintViolationError,
    CoordinateValidityError,
    GaugeError,
    InequalityViolationError,
    PositivityLossError,
    RegularityError,
)
from models import DressedPoint, Rejection


def relative(value, scale):
    return value / max(1.0, scale)


@pytest.mark.parametrize("n,d,gamma", [(2, 1, 0.3), (3, 1, 0.5), (3, 2, 0.5), (2, 3, 0.8)])
def test_slice_point_satisfies_constraint(reduction, make_slice_point, n, d, gamma):
    s = make_slice_point(n, d, gamma)
    scale = float(np.max(np.abs(s.L)))
    assert relative(reduction.constraint_residual(s), scale) < 1e-10
    assert np.allclose(s.U.imag, 0.0, atol=1e-12)
    assert np.all(s.U.real > 0)

    ext = reduction.extended_from_dressed(reduction.slice_to_dressed(s))
    assert reduction.moment_residual(ext) < 1e-9
    assert relative(reduction.dressed_identity_residual(ext.double.b_R, ext.W), scale) < 1e-10
    assert min(reduction.invertibility_margins(reduction.slice_to_dressed(s))) > 0.0


def test_primary_from_dressed_inverts(reduction, linalg, sampling, rng):
    b_R = linalg.random_upper_positive(3, rng)
    W = sampling.random_spins(rng, 3, 2)
    v, half = reduction.dressed_spins(b_R, W)
    assert np.allclose(half @ b_R.T, v)
    assert np.allclose(reduction.primary_from_dressed(b_R, v), W, atol=1e-12)


def test_gauge_fix_is_idempotent(reduction, make_slice_point):
    s = make_slice_point(3, 2, 0.5)
    again = reduction.gauge_fix_plus(s.q, s.v, s.gamma)
    assert np.max(np.abs(again.v - s.v)) < 1e-12


def test_L_from_Qv_rejects_zero_spins(reduction):
    result = reduction.L_from_Qv(np.array([0.0, 1.0]), 0.5, np.zeros((1, 2)))
    assert isinstance(result, Rejection)
    assert result.trace == 0.0
    with pytest.raises(PositivityLossError):
        reduction.slice_point(np.array([0.0, 1.0]), np.zeros((1, 2)), 0.5)


def test_gauge_fix_rejects_vanishing_component(reduction):
    with pytest.raises(GaugeError):
        reduction.gauge_fix_plus(np.array([0.0, 1.0]), np.array([[1.0, 0.0]]), 0.5)


def test_check_regular(reduction):
    reduction.check_regular(np.array([0.0, 2.0]))
    with pytest.raises(RegularityError):
        reduction.check_regular(np.array([0.4, 0.4]))
    with pytest.raises(RegularityError):
        reduction.check_regular(np.array([np.pi, -np.pi]))


def test_chart_round_trip(reduction, sampling, rng):
    q, p, W = sampling.random_chart(rng, 3, 2, 0.6)
    pt = reduction.chart_qpW(q, p, W, 0.6)
    assert reduction.b_plus_residual(q, W, reduction.b_plus_solve(q, W)) < 1e-12
    chart = reduction.chart_inverse(pt)
    assert np.allclose(chart.q, q, atol=1e-12)
    assert np.allclose(chart.p, p, atol=1e-10)
    assert np.allclose(chart.W, W, atol=1e-10)


def test_chart_round_trip_through_slice(reduction, make_slice_point):
    s = make_slice_point(3, 2, 0.4)
    chart = reduction.chart_from_slice(s)
    rebuilt = reduction.chart_qpW(chart.q, chart.p, chart.W, s.gamma)
    scale = float(np.max(np.abs(s.L)))
    assert relative(float(np.max(np.abs(rebuilt.L - s.L))), scale) < 1e-8
    assert relative(float(np.max(np.abs(rebuilt.v - s.v))), scale) < 1e-8


def test_chart_rejects_inadmissible_spins(reduction, sampling, rng):
    W = sampling.random_spins(rng, 2, 1)
    with pytest.raises(ConstraintViolationError):
        reduction.chart_qpW(np.array([0.0, 1.0]), np.zeros(2), W, 0.5)


def test_chart_inverse_needs_diagonal_g(reduction, make_slice_point, linalg, rng):
    s = make_slice_point(2, 1, 0.5)
    pt = reduction.slice_to_dressed(s)
    rotated = DressedPoint(g_R=linalg.random_unitary(2, rng), L=pt.L, v=pt.v, gamma=pt.gamma)
    with pytest.raises(CoordinateValidityError):
        reduction.chart_inverse(rotated)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_normal_form(reduction, sampling, rng, d):
    gamma = 0.5
    y = sampling.random_normal_form_y(rng, 3, gamma)
    pt = reduction.normal_form_d(y, gamma, d)
    assert np.all(pt.v[:d - 1] == 0.0)
    assert np.all(pt.v[d - 1].real > 0)
    assert np.allclose(np.abs(pt.v[d - 1]) ** 2, reduction.normal_form_moduli(y, gamma))
    assert relative(reduction.constraint_residual(pt), float(y.max())) < 1e-10
    assert relative(reduction.spectrum_residual(pt), float(y.max())) < 1e-10
    assert reduction.moment_residual(reduction.extended_from_dressed(pt)) < 1e-10


def test_normal_form_rejects_crowded_spectrum(reduction):
    with pytest.raises(InequalityViolationError):
        reduction.normal_form_d(np.array([1.0, 0.9]), 0.5, 1)


def test_to_gauge_slice_of_normal_form(reduction, small_normal_form_state):
    s = small_normal_form_state
    assert s.n == 3 and s.d == 2
    assert reduction.constraint_residual(s) < 1e-10
    assert np.all(s.U.real > 0)


@pytest.mark.parametrize("n,d", [(2, 2), (3, 2), (3, 3)])
def test_s1_chart_round_trip(reduction, sampling, rng, n, d):
    coords = sampling.random_s1_coords(rng, n, d, 0.5)
    pt = reduction.slice_point_S1(coords)
    assert relative(reduction.constraint_residual(pt), float(coords.y.max())) < 1e-10
    back = reduction.s1_coordinates(pt)
    assert np.allclose(back.y, coords.y)
    assert np.allclose(back.v_rest, coords.v_rest, atol=1e-9)
    assert np.allclose(np.exp(1j * back.tau_angles), np.exp(1j * coords.tau_angles), atol=1e-9)
    assert np.allclose(np.exp(1j * back.gamma_angles), np.exp(1j * coords.gamma_angles), atol=1e-9)


def test_s1_chart_rejects_bad_coordinates(reduction, sampling, rng):
    coords = sampling.random_s1_coords(rng, 2, 2, 0.5)
    with pytest.raises(CoordinateValidityError):
        reduction.slice_point_S1(coords.model_copy(update={"y": coords.y[::-1].copy()}))
    negative = coords.v_rest.copy()
    negative[0, 0] = -negative[0, 0]
    with pytest.raises(CoordinateValidityError):
        reduction.slice_point_S1(coords.model_copy(update={"v_rest": negative}))


def test_s1_coordinates_need_two_spins(reduction, sampling, rng):
    pt = reduction.normal_form_d(sampling.random_normal_form_y(rng, 2, 0.5), 0.5, 1)
    with pytest.raises(CoordinateValidityError):
        reduction.s1_coordinates(pt)


def test_to_s1_gauge(reduction, make_slice_point):
    s = make_slice_point(3, 2, 0.5)
    pt = reduction.to_s1_gauge(reduction.slice_to_dressed(s))
    assert np.allclose(pt.L, np.diag(np.diag(pt.L)), atol=1e-10)
    assert np.all(np.diff(np.diag(pt.L).real) < 0)
    assert np.allclose(pt.v[0].imag, 0.0, atol=1e-12)
    scale = float(np.max(np.abs(s.L)))
    assert relative(reduction.constraint_residual(pt), scale) < 1e-10
