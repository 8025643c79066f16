"""Tests for the scaling limit and the spinless d = 1 reduction."""

import numpy as np
import pytest

from errors import ConstraintViolationError, DimensionError, SpinRSError
from models import LimitsReport


@pytest.fixture
def chart_data(rng, sampling):
    q = sampling.random_angles(rng, 3)
    p = 0.5 * rng.standard_normal(3)
    W = sampling.random_spins(rng, 3, 2)
    return q, p, W


def test_normalize_spins(limits, sampling, rng):
    W = limits.normalize_spins(sampling.random_spins(rng, 4, 2), 0.7)
    assert np.allclose(np.sum(np.abs(W) ** 2, axis=0), 1.4)
    with pytest.raises(ConstraintViolationError):
        limits.normalize_spins(np.array([[1.0, 0.0]]), 0.7)


def test_limit_spin_norms(limits, sampling, rng):
    gamma = 0.6
    W = limits.normalize_spins(sampling.random_spins(rng, 3, 2), gamma)
    assert np.max(np.abs(limits.limit_spin_norms(W, gamma) - 2.0 * gamma)) < 1e-7


def test_gh_limit_is_second_order(limits, chart_data):
    q, p, W = chart_data
    errors = limits.gh_limit_check(q, p, W, (1e-2, 1e-3), 0.5)
    assert errors[1] < errors[0]
    assert 5.0 <= errors[0] / errors[1] <= 20.0


def test_gh_limit_without_spins(limits, chart_data):
    q, p, _ = chart_data
    errors = limits.gh_limit_check(q, p, np.zeros((1, 3)), (1e-2,), 0.5)
    assert errors[0] < 1e-4
    assert limits.gh_hamiltonian(q, p, np.zeros((1, 3))) == pytest.approx(0.5 * np.sum(p ** 2))


def test_gh_symplectic_form_converges(limits, sampling, rng):
    errors = limits.gh_symplectic_errors(sampling.random_spins(rng, 3, 2), (1e-2, 1e-3))
    assert errors[1] / errors[0] <= 0.2


def test_pair_weight_variants(limits):
    q = np.array([0.0, 1.0, 2.5])
    standard = limits.pair_weight(q, 0.5)
    printed = limits.pair_weight(q, 0.5, "printed")
    assert np.allclose(np.diag(standard), 1.0)
    assert np.allclose(standard, standard.T)
    assert np.all(printed[~np.eye(3, dtype=bool)] < standard[~np.eye(3, dtype=bool)])
    with pytest.raises(SpinRSError):
        limits.pair_weight(q, 0.5, "other")


@pytest.mark.parametrize("weight", ["standard", "printed"])
def test_spinless_map_reproduces_hamiltonian(limits, make_slice_point, weight):
    s = make_slice_point(3, 1, 0.5)
    theta, H = limits.spinless_map(s, weight)
    assert limits.rs_hamiltonian(s.q, theta, s.gamma, weight) == pytest.approx(H, rel=1e-12)


def test_spinless_state_is_rank_one(limits, make_slice_point):
    s = make_slice_point(4, 1, 0.5)
    assert limits.rank_one_residual(s) / max(1.0, float(np.max(np.abs(s.F))) ** 2) < 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_spinless_darboux_coordinates(limits, make_slice_point, n):
    qtheta, thetatheta = limits.darboux_check(make_slice_point(n, 1, 0.5))
    assert qtheta < 1e-8
    assert thetatheta < 1e-8


@pytest.mark.parametrize("n", [2, 3, 4])
def test_spinless_newton(limits, dynamics, make_slice_point, n):
    s = make_slice_point(n, 1, 0.5)
    scale = max(1.0, float(np.max(np.abs(dynamics.newton_rhs(np.asarray(s.q), s.v, s.gamma)))))
    assert limits.spinless_newton(s) / scale < 1e-9


def test_rs_equations_velocity(limits, make_slice_point):
    s = make_slice_point(3, 1, 0.5)
    theta, H = limits.spinless_map(s)
    qdot, theta_dot, _ = limits.rs_equations(s.q, theta, s.gamma)
    assert np.allclose(qdot, 2.0 * np.diag(s.F).real, rtol=1e-12)
    assert qdot.sum() == pytest.approx(2.0 * H, rel=1e-12)
    assert theta_dot.shape == (3,)


def test_printed_weight_breaks_newton(limits, dynamics, make_slice_point):
    s = make_slice_point(3, 1, 0.5)
    scale = float(np.max(np.abs(dynamics.newton_rhs(np.asarray(s.q), s.v, s.gamma))))
    assert limits.spinless_newton(s, "printed") > 1e-3 * scale


@pytest.mark.parametrize("weight", ["standard", "printed"])
def test_pair_log_derivative(limits, weight):
    q = np.array([0.3, 1.4, 4.0])
    gamma, h = 0.7, 1e-5
    ell = limits.pair_log_derivative(q, gamma, weight)
    assert np.allclose(ell, -ell.T)
    shift = np.array([h, 0.0, 0.0])
    numeric = (np.log(limits.pair_weight(q + shift, gamma, weight))
               - np.log(limits.pair_weight(q - shift, gamma, weight))) / (2.0 * h)
    assert np.allclose(ell[0, 1:], numeric[0, 1:], rtol=1e-7, atol=1e-9)
    with pytest.raises(SpinRSError):
        limits.pair_log_derivative(q, gamma, "other")


def test_spinless_checks_need_one_spin(limits, make_slice_point):
    s = make_slice_point(2, 2, 0.5)
    with pytest.raises(DimensionError):
        limits.spinless_map(s)
    with pytest.raises(DimensionError):
        limits.darboux_check(s)
    with pytest.raises(DimensionError):
        limits.spinless_newton(s)


def test_report(limits, chart_data, make_slice_point):
    q, p, W = chart_data
    report = limits.report(q, p, W, 0.5, make_slice_point(3, 1, 0.5))
    assert isinstance(report, LimitsReport)
    assert report.eps == [1e-2, 1e-3]
    assert len(report.gh_errors) == 2
    assert 5.0 <= report.gh_ratio <= 20.0
    assert report.spin_norm_residual < 1e-7
    assert report.darboux_residual < 1e-8
