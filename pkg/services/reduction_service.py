"""
Moment map constraint: dressed spins, L(Q, v), the (q, p, W) chart, gauge fixing and normal forms
"""
import logging
from typing import List, Tuple, Union

import numpy as np
from scipy import linalg as sla

from config import settings
from errors import (
    CoordinateValidityError,
    ConstraintViolationError,
    DimensionError,
    GaugeError,
    InequalityViolationError,
    InterlacingError,
    PositivityLossError,
    RegularityError,
)
from models import DoublePoint, DressedPoint, ExtendedPoint, QpWChart, Rejection, S1Coords, SlicePoint
from services.double_service import DoubleService
from services.linalg_service import LinalgService, min_angular_gap
from services.spin_service import SpinService

logger = logging.getLogger(__name__)


class ReductionService:
    """Constructs constrained points in every parametrization used by the lab"""

    def __init__(self, linalg: LinalgService = None, spins: SpinService = None, double: DoubleService = None):
        """Initialize reduction service"""
        self.linalg = linalg or LinalgService()
        self.spins = spins or SpinService(self.linalg)
        self.double = double or DoubleService(self.linalg, self.spins.poisson, self.spins)
        self.positivity_tolerance = settings.SPINRS_POSITIVITY_TOLERANCE
        self.regularity_margin = settings.SPINRS_REGULARITY_MARGIN
        self.inequality_margin = settings.SPINRS_INEQUALITY_MARGIN
        self.phi_tolerance = settings.SPINRS_PHI_TOLERANCE

    # ==================== DRESSED SPINS ====================

    def dressed_spins(self, b_R: np.ndarray, W: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Dressed spins v(α) = b_R b_1 ⋯ b_{α−1} w^α and half-dressed spins b_R^{-1} v(α).

        Args:
            b_R: upper triangular factor of the double
            W: primary spins, shape (d, n)

        Returns:
            (v, half), both of shape (d, n)
        """
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        if W.shape[1] != b_R.shape[0]:
            raise DimensionError(f"Spin block shape {W.shape} does not match n = {b_R.shape[0]}")
        half = self.double.half_dressed(W)
        return half @ b_R.T, half

    def primary_from_dressed(self, b_R: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Invert dressed_spins: w^α = (b_R b_1 ⋯ b_{α−1})^{-1} v(α)"""
        v = np.atleast_2d(np.asarray(v, dtype=complex))
        W = np.empty_like(v)
        B = np.asarray(b_R, dtype=complex)
        for alpha in range(v.shape[0]):
            W[alpha] = sla.solve_triangular(B, v[alpha])
            B = B @ self.spins.moment_b(W[alpha])
        return W

    def dressed_identity_residual(self, b_R: np.ndarray, W: np.ndarray) -> float:
        """‖B_d B_d† − b_R b_R† − Σ v(α) v(α)†‖_max"""
        v, _ = self.dressed_spins(b_R, W)
        B = np.asarray(b_R, dtype=complex)
        for w in np.atleast_2d(W):
            B = B @ self.spins.moment_b(w)
        F = v.T @ v.conj()
        return float(np.max(np.abs(B @ B.conj().T - b_R @ b_R.conj().T - F)))

    # ==================== MOMENT MAP ====================

    def extended_from_dressed(self, pt: DressedPoint) -> ExtendedPoint:
        b_R = self.linalg.cholesky_upper(pt.L)
        W = self.primary_from_dressed(b_R, pt.v)
        return ExtendedPoint(double=DoublePoint(g_R=pt.g_R, b_R=b_R), W=W, gamma=pt.gamma)

    def total_moment(self, pt: ExtendedPoint) -> np.ndarray:
        """Λ = b_L b_R b(w^1) ⋯ b(w^d)"""
        b_L, _, _ = self.double.left_factors(pt.double)
        Lam = b_L @ pt.double.b_R
        for w in np.atleast_2d(pt.W):
            Lam = Lam @ self.spins.moment_b(w)
        return Lam

    def moment_residual(self, pt: ExtendedPoint) -> float:
        """‖Λ Λ† − e^{2γ} 1‖_max"""
        Lam = self.total_moment(pt)
        return float(np.max(np.abs(Lam @ Lam.conj().T - np.exp(2.0 * pt.gamma) * np.eye(Lam.shape[0]))))

    @staticmethod
    def constraint_residual(pt: Union[DressedPoint, SlicePoint]) -> float:
        """‖e^{2γ} g_R^{-1} L g_R − L − F‖_max"""
        g = np.diag(pt.Q) if isinstance(pt, SlicePoint) else pt.g_R
        lhs = np.exp(2.0 * pt.gamma) * g.conj().T @ pt.L @ g - pt.L
        return float(np.max(np.abs(lhs - pt.F)))

    def invertibility_margins(self, pt: DressedPoint) -> List[float]:
        """Smallest eigenvalue of L + Σ_{α≤k} v(α) v(α)† for k = 0..d"""
        M = np.array(pt.L, dtype=complex)
        margins = [float(np.linalg.eigvalsh(M).min())]
        for v in pt.v:
            M = M + np.outer(v, v.conj())
            margins.append(float(np.linalg.eigvalsh(M).min()))
        return margins

    # ==================== GAUGE SLICE ====================

    def check_regular(self, q: np.ndarray) -> None:
        gap = min_angular_gap(q)
        if gap <= self.regularity_margin:
            raise RegularityError(f"Q is not regular: angular gap {gap:.3e}")

    def L_from_Qv(self, q: np.ndarray, gamma: float, v: np.ndarray) -> Union[np.ndarray, Rejection]:
        """
        L_ij = F_ij / (e^{2γ} Q_j Q_i^{-1} − 1), or a Rejection when L is not positive definite.
        """
        q = np.asarray(q, dtype=float)
        v = np.atleast_2d(np.asarray(v, dtype=complex))
        F = v.T @ v.conj()
        denom = np.exp(2.0 * gamma) * np.exp(1j * (q[None, :] - q[:, None])) - 1.0
        L = F / denom
        L = 0.5 * (L + L.conj().T)
        lam = np.linalg.eigvalsh(L)
        trace = float(np.trace(L).real)
        if trace <= 0.0 or lam.min() <= self.positivity_tolerance * trace:
            return Rejection(smallest_eigenvalue=float(lam.min()), trace=trace)
        return L

    def slice_point(self, q: np.ndarray, v: np.ndarray, gamma: float) -> SlicePoint:
        """SlicePoint from (q, v) as given; raises PositivityLossError for rejected L"""
        L = self.L_from_Qv(q, gamma, v)
        if isinstance(L, Rejection):
            raise PositivityLossError(f"L(Q, v) is not positive definite: λ_min = {L.smallest_eigenvalue:.3e}",
                                      L.smallest_eigenvalue)
        return SlicePoint(q=np.asarray(q, dtype=float), v=np.atleast_2d(np.asarray(v, dtype=complex)), gamma=gamma, L=L)

    def gauge_fix_plus(self, q: np.ndarray, v: np.ndarray, gamma: float) -> SlicePoint:
        """
        Apply the diagonal unitary making every 𝒰_i = Σ_α v(α)_i real positive.

        Raises:
            GaugeError: some 𝒰_i vanishes
        """
        v = np.atleast_2d(np.asarray(v, dtype=complex))
        U = v.sum(axis=0)
        modulus = np.abs(U)
        scale = max(float(np.max(np.abs(v))), 1e-300)
        if modulus.min() <= 1e-14 * scale:
            raise GaugeError(f"𝒰 has a vanishing component ({modulus.min():.3e})")
        tau = U.conj() / modulus
        return self.slice_point(q, v * tau[None, :], gamma)

    def to_gauge_slice(self, pt: DressedPoint) -> SlicePoint:
        """Diagonalize g_R and gauge-fix: the slice representative of a constrained point"""
        (theta, V), = self.linalg.eig_unitary_smooth([pt.g_R])
        v = pt.v @ V.conj()
        return self.gauge_fix_plus(theta, v, pt.gamma)

    @staticmethod
    def slice_to_dressed(s: SlicePoint) -> DressedPoint:
        return DressedPoint(g_R=np.diag(s.Q), L=s.L, v=s.v, gamma=s.gamma)

    # ==================== (q, p, W) CHART ====================

    def b_plus_solve(self, q: np.ndarray, W: np.ndarray) -> np.ndarray:
        """
        Unit upper triangular b₊ with b₊ S₊(W) = Q^{-1} b₊ Q, by recursion on the distance from the diagonal.

        Raises:
            RegularityError: Q is not regular
        """
        q = np.asarray(q, dtype=float)
        self.check_regular(q)
        n = q.size
        S = np.eye(n, dtype=complex)
        for w in np.atleast_2d(W):
            S = S @ self.spins.moment_b(w)
        S_plus = S / np.diag(S)[:, None]
        Q = np.exp(1j * q)
        b = np.eye(n, dtype=complex)
        for k in range(1, n):
            for a in range(n - k):
                c = a + k
                inv = 1.0 / (Q[c] / Q[a] - 1.0)
                b[a, c] = inv * (S_plus[a, c] + b[a, a + 1:c] @ S_plus[a + 1:c, c])
        return b

    def b_plus_residual(self, q: np.ndarray, W: np.ndarray, b_plus: np.ndarray) -> float:
        S = np.eye(len(q), dtype=complex)
        for w in np.atleast_2d(W):
            S = S @ self.spins.moment_b(w)
        S_plus = S / np.diag(S)[:, None]
        Q = np.exp(1j * np.asarray(q))
        return float(np.max(np.abs(b_plus @ S_plus - (Q.conj()[:, None] * b_plus * Q[None, :]))))

    def check_phi(self, W: np.ndarray, gamma: float) -> None:
        residual = self.spins.phi_residual(W, np.full(np.atleast_2d(W).shape[1], gamma))
        if residual > self.phi_tolerance:
            raise ConstraintViolationError(f"φ(W) ≠ γ·1 (residual {residual:.3e})", residual)

    def chart_qpW(self, q: np.ndarray, p: np.ndarray, W: np.ndarray, gamma: float) -> DressedPoint:
        """
        Constrained point with g_R = Q and b_R = e^p b₊(Q, W).

        Raises:
            RegularityError: Q is not regular
            ConstraintViolationError: φ(W) differs from γ·1
        """
        q = np.asarray(q, dtype=float)
        self.check_phi(W, gamma)
        b_R = np.exp(np.asarray(p, dtype=float))[:, None] * self.b_plus_solve(q, W)
        v, _ = self.dressed_spins(b_R, W)
        return DressedPoint(g_R=np.diag(np.exp(1j * q)), L=b_R @ b_R.conj().T, v=v, gamma=gamma)

    def chart_inverse(self, pt: DressedPoint) -> QpWChart:
        """(q, p, W) of a constrained point whose g_R is diagonal"""
        g = pt.g_R
        off = np.max(np.abs(g - np.diag(np.diag(g)))) if g.shape[0] > 1 else 0.0
        if off > 1e-10:
            raise CoordinateValidityError(f"g_R is not diagonal (off-diagonal {off:.3e})")
        q = np.angle(np.diag(g))
        self.check_regular(q)
        b_R = self.linalg.cholesky_upper(pt.L)
        W = self.primary_from_dressed(b_R, pt.v)
        self.check_phi(W, pt.gamma)
        return QpWChart(q=q, p=np.log(np.diag(b_R).real), W=W, gamma=pt.gamma)

    def chart_from_slice(self, s: SlicePoint) -> QpWChart:
        return self.chart_inverse(self.slice_to_dressed(s))

    # ==================== NORMAL FORMS ====================

    def check_normal_form_y(self, y: np.ndarray, gamma: float) -> None:
        y = np.asarray(y, dtype=float)
        y_next = np.append(y[1:], 0.0)
        gaps = y - np.exp(2.0 * gamma) * y_next
        if np.any(gaps <= self.inequality_margin * max(1.0, float(np.abs(y).max()))):
            raise InequalityViolationError(f"y must satisfy y_i > e^(2γ) y_(i+1) > 0; gaps {gaps}")

    @staticmethod
    def normal_form_moduli(y: np.ndarray, gamma: float) -> np.ndarray:
        """|v(d)_l|² = (e^{2γ} − 1) y_l Π_{k≠l} (e^{2γ} y_k − y_l)/(y_k − y_l)"""
        y = np.asarray(y, dtype=float)
        e2 = np.exp(2.0 * gamma)
        out = np.empty_like(y)
        for l in range(y.size):
            others = np.delete(y, l)
            out[l] = np.expm1(2.0 * gamma) * y[l] * np.prod((e2 * others - y[l]) / (others - y[l]))
        return out

    def normal_form_d(self, y: np.ndarray, gamma: float, d: int) -> DressedPoint:
        """
        Constrained point with L = diag(y), v(α) = 0 for α < d and v(d) > 0.

        Raises:
            InequalityViolationError: y_i > e^{2γ} y_{i+1} fails for some i (y_{n+1} = 0)
        """
        y = np.asarray(y, dtype=float)
        self.check_normal_form_y(y, gamma)
        n = y.size
        v = np.zeros((d, n), dtype=complex)
        v[d - 1] = np.sqrt(self.normal_form_moduli(y, gamma))
        L = np.diag(y).astype(complex)
        _, U = self.linalg.eig_hermitian(L + np.outer(v[d - 1], v[d - 1].conj()))
        logger.debug(f"Normal form built for n={n}, d={d}, gamma={gamma}")
        return DressedPoint(g_R=U.conj().T, L=L, v=v, gamma=gamma)

    def spectrum_residual(self, pt: DressedPoint) -> float:
        """max |eig(L + F) − e^{2γ} eig(L)|"""
        lhs = np.sort(np.linalg.eigvalsh(pt.L + pt.F))
        rhs = np.sort(np.exp(2.0 * pt.gamma) * np.linalg.eigvalsh(pt.L))
        return float(np.max(np.abs(lhs - rhs)))

    # ==================== S1 CHART ====================

    @staticmethod
    def s1_amplitudes(y: np.ndarray, mu: np.ndarray, gamma: float) -> np.ndarray:
        """𝐕_l = [(e^{2γ} y_l − μ_l) Π_{k≠l} (e^{2γ} y_k − μ_l)/(μ_k − μ_l)]^{1/2}"""
        e2 = np.exp(2.0 * gamma)
        out = np.empty(len(y))
        for l in range(len(y)):
            yk = np.delete(y, l)
            mk = np.delete(mu, l)
            out[l] = (e2 * y[l] - mu[l]) * np.prod((e2 * yk - mu[l]) / (mk - mu[l]))
        return np.sqrt(out)

    def check_interlacing(self, y: np.ndarray, mu: np.ndarray, gamma: float) -> None:
        e2y = np.exp(2.0 * gamma) * np.asarray(y)
        upper = e2y - mu
        lower = mu[:-1] - e2y[1:]
        if np.any(upper <= self.inequality_margin) or np.any(lower <= self.inequality_margin):
            raise InterlacingError(f"Spectra do not interlace: e^(2γ)y = {e2y}, μ = {mu}")

    def _s1_frame(self, y: np.ndarray, v_rest: np.ndarray, gamma: float):
        y = np.asarray(y, dtype=float)
        v_rest = np.atleast_2d(np.asarray(v_rest, dtype=complex))
        if np.any(y <= 0) or np.any(np.diff(y) >= 0):
            raise CoordinateValidityError("y must be positive and strictly decreasing")
        if np.any(np.abs(v_rest[0].imag) > 1e-12) or np.any(v_rest[0].real <= 0):
            raise CoordinateValidityError("v(1) must be real positive")
        L1 = np.diag(y) + v_rest.T @ v_rest.conj()
        mu, U1 = self.linalg.eig_hermitian(L1)
        self.check_interlacing(y, mu, gamma)
        return y, v_rest, L1, mu, U1

    def slice_point_S1(self, coords: S1Coords) -> DressedPoint:
        """
        Point of the S1 chart: L = diag(y), v(1..d−1) given, v(d) = g₁^{-1} τ 𝐕(y, μ), g_R = Γ g_R⁰.

        Raises:
            CoordinateValidityError: v(1) not positive, or y not decreasing
            InterlacingError: μ = eig(L₁) does not interlace with e^{2γ} y
        """
        gamma = coords.gamma
        y, v_rest, L1, mu, U1 = self._s1_frame(coords.y, coords.v_rest, gamma)
        tau = np.exp(1j * np.asarray(coords.tau_angles, dtype=float))
        v_d = U1 @ (tau * self.s1_amplitudes(y, mu, gamma))
        M = L1 + np.outer(v_d, v_d.conj())
        _, U_M = self.linalg.eig_hermitian(M)
        Gamma = np.exp(1j * np.asarray(coords.gamma_angles, dtype=float))
        g_R = Gamma[:, None] * U_M.conj().T
        v = np.vstack([v_rest, v_d[None, :]])
        return DressedPoint(g_R=g_R, L=np.diag(y).astype(complex), v=v, gamma=gamma)

    def s1_coordinates(self, pt: DressedPoint) -> S1Coords:
        """Inverse of slice_point_S1 on points with diagonal L and positive v(1)"""
        L = pt.L
        off = np.max(np.abs(L - np.diag(np.diag(L)))) if L.shape[0] > 1 else 0.0
        if off > 1e-10 * max(1.0, float(np.abs(L).max())):
            raise CoordinateValidityError(f"L is not diagonal (off-diagonal {off:.3e})")
        if pt.d < 2:
            raise CoordinateValidityError("S1 coordinates need d ≥ 2")
        y, v_rest, L1, mu, U1 = self._s1_frame(np.diag(L).real, pt.v[:-1], pt.gamma)
        u = U1.conj().T @ pt.v[-1]
        M = L1 + np.outer(pt.v[-1], pt.v[-1].conj())
        _, U_M = self.linalg.eig_hermitian(M)
        Gamma = np.diag(pt.g_R @ U_M)
        return S1Coords(y=y, v_rest=v_rest, tau_angles=np.angle(u), gamma_angles=np.angle(Gamma),
                        gamma=pt.gamma, mu=mu)

    def to_s1_gauge(self, pt: DressedPoint) -> DressedPoint:
        """Act by the unitary that diagonalizes L (descending) and makes v(1) positive"""
        _, U = self.linalg.eig_hermitian(pt.L)
        h = U.conj().T
        v1 = h @ pt.v[0]
        phase = v1.conj() / np.abs(v1)
        h = phase[:, None] * h
        return DressedPoint(g_R=h @ pt.g_R @ h.conj().T, L=h @ pt.L @ h.conj().T,
                            v=pt.v @ h.T, gamma=pt.gamma)
