"""
Degenerations: the scaling limit to the spin Sutherland model and the d = 1 spinless RS reduction
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ConstraintViolationError, DimensionError, SpinRSError
from models import LimitsReport, SlicePoint
from services.dynamics_service import DynamicsService
from services.reduced_poisson_service import ReducedPoissonService

logger = logging.getLogger(__name__)


class LimitsService:
    """Numerical checks of the Gibbons–Hermsen scaling limit and the spinless model"""

    def __init__(self, redpoisson: ReducedPoissonService = None, dynamics: DynamicsService = None):
        """Initialize limits service"""
        self.redpoisson = redpoisson or ReducedPoissonService()
        self.reduction = self.redpoisson.reduction
        self.spins = self.reduction.spins
        self.dynamics = dynamics or DynamicsService(self.reduction)

    # ==================== SCALING LIMIT ====================

    @staticmethod
    def normalize_spins(W: np.ndarray, gamma: float) -> np.ndarray:
        """Rescale each particle's spins so that (w_j•, w_j•) = 2γ"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        norms = np.sum(np.abs(W) ** 2, axis=0)
        if np.any(norms == 0.0):
            raise ConstraintViolationError("A particle carries no spin; (w_j, w_j) = 2γ cannot be imposed", 2.0 * gamma)
        return W * np.sqrt(2.0 * gamma / norms)[None, :]

    def rescaling_factors(self, W: np.ndarray, eps: float, gamma: float) -> np.ndarray:
        """c_j² such that φ(√ε c ⊙ W) = εγ·1"""
        return self.spins.torus_rescaling(np.sqrt(eps) * np.atleast_2d(np.asarray(W, dtype=complex)), eps * gamma)

    def limit_spin_norms(self, W: np.ndarray, gamma: float, eps: float = 1e-5) -> np.ndarray:
        """ε → 0 limit of c_j(ε)² (w_j•, w_j•), Richardson-extrapolated from ε and ε/2"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        norms = np.sum(np.abs(W) ** 2, axis=0)
        coarse = self.rescaling_factors(W, eps, gamma)
        fine = self.rescaling_factors(W, 0.5 * eps, gamma)
        return (2.0 * fine - coarse) * norms

    @staticmethod
    def gh_hamiltonian(q: np.ndarray, p: np.ndarray, W: np.ndarray) -> float:
        """½ Σ p² + (1/32) Σ_{i≠j} |(w_i•, w_j•)|² / sin²((q_i − q_j)/2)"""
        q = np.asarray(q, dtype=float)
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        overlap = np.abs(W.T @ W.conj()) ** 2
        off = ~np.eye(q.size, dtype=bool)
        s2 = np.sin(0.5 * (q[:, None] - q[None, :])) ** 2
        return float(0.5 * np.sum(np.asarray(p) ** 2) + np.sum(overlap[off] / s2[off]) / 32.0)

    def gh_limit_check(self, q: np.ndarray, p: np.ndarray, W: np.ndarray, eps_list: Sequence[float],
                       gamma: float) -> List[float]:
        """
        |(tr L + tr L^{-1} − 2n)/(8ε²) − H_GH| for each ε, with spins rescaled to φ = εγ·1.

        Args:
            q: regular angles
            p: momenta
            W: spins of shape (d, n); normalized to (w_j•, w_j•) = 2γ before scaling
            eps_list: scaling parameters
            gamma: coupling

        Raises:
            RegularityError: Q not regular
            ConstraintViolationError: a particle without spin when others carry spin
        """
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        n = q.size
        spinless = not np.any(W)
        base = W if spinless else self.normalize_spins(W, gamma)
        target = self.gh_hamiltonian(q, p, base)
        errors = []
        for eps in eps_list:
            if spinless:
                scaled = base
            else:
                c = np.sqrt(self.rescaling_factors(base, eps, gamma))
                scaled = np.sqrt(eps) * base * c[None, :]
                self.reduction.check_phi(scaled, eps * gamma)
            b_R = np.exp(eps * p)[:, None] * self.reduction.b_plus_solve(q, scaled)
            L = b_R @ b_R.conj().T
            value = (np.trace(L).real + np.trace(np.linalg.inv(L)).real - 2.0 * n) / (8.0 * eps ** 2)
            errors.append(float(abs(value - target)))
            logger.debug(f"gh_limit_check eps={eps:.3g}: error {errors[-1]:.3e}")
        return errors

    def gh_symplectic_errors(self, W: np.ndarray, eps_list: Sequence[float]) -> List[float]:
        """max_α ‖Ω(√ε w^α) − Ω₀‖_max with Ω₀ = Σ dx∧dy the standard form of C^n"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        n = W.shape[1]
        zero = np.zeros((n, n))
        standard = np.block([[zero, np.eye(n)], [-np.eye(n), zero]])
        out = []
        for eps in eps_list:
            worst = max(float(np.max(np.abs(self.spins.symplectic_form(np.sqrt(eps) * w) - standard))) for w in W)
            out.append(worst)
        return out

    # ==================== SPINLESS LIMIT ====================

    @staticmethod
    def pair_weight(q: np.ndarray, gamma: float, weight: str = "standard") -> np.ndarray:
        """
        Off-diagonal pair weights; the diagonal is set to 1.

        "standard": 1 + sinh²γ / sin²((q_i − q_j)/2)
        "printed":  1 + sinh²γ / (1 + sin²((q_i − q_j)/2))
        """
        q = np.asarray(q, dtype=float)
        s2 = np.sin(0.5 * (q[:, None] - q[None, :])) ** 2
        np.fill_diagonal(s2, 1.0)
        if weight == "standard":
            out = 1.0 + np.sinh(gamma) ** 2 / s2
        elif weight == "printed":
            out = 1.0 + np.sinh(gamma) ** 2 / (1.0 + s2)
        else:
            raise SpinRSError(f"Unknown pair weight: {weight}")
        np.fill_diagonal(out, 1.0)
        return out

    def theta_from(self, q: np.ndarray, F_diag: np.ndarray, gamma: float, weight: str = "standard") -> np.ndarray:
        """θ_j = ½ [log F_jj − ½ Σ_{i≠j} log w_ij]"""
        w = self.pair_weight(q, gamma, weight)
        return 0.5 * (np.log(np.asarray(F_diag, dtype=float)) - 0.5 * np.sum(np.log(w), axis=0))

    def spinless_map(self, s: SlicePoint, weight: str = "standard") -> Tuple[np.ndarray, float]:
        """
        (θ, H_RS) for a d = 1 state; H_RS = Σ F_jj = Σ e^{2θ_j} Π_{i≠j} w_ij^{1/2}.

        Raises:
            DimensionError: d ≠ 1
        """
        if s.d != 1:
            raise DimensionError(f"The spinless map needs d = 1, got d = {s.d}")
        F_diag = np.diag(s.F).real
        return self.theta_from(s.q, F_diag, s.gamma, weight), float(F_diag.sum())

    def rs_hamiltonian(self, q: np.ndarray, theta: np.ndarray, gamma: float, weight: str = "standard") -> float:
        w = self.pair_weight(q, gamma, weight)
        return float(np.sum(np.exp(2.0 * np.asarray(theta)) * np.prod(np.sqrt(w), axis=0)))

    @staticmethod
    def rank_one_residual(s: SlicePoint) -> float:
        """max |F_ij F_ji − F_ii F_jj|"""
        F = s.F
        return float(np.max(np.abs(F * F.T - np.outer(np.diag(F), np.diag(F)))))

    def theta_function(self, n: int, gamma: float, weight: str = "standard"):
        def theta(y: np.ndarray) -> np.ndarray:
            q = y[:n]
            F_diag = y[n:2 * n] ** 2 + y[2 * n:3 * n] ** 2
            return self.theta_from(q, F_diag, gamma, weight)
        return theta

    def darboux_check(self, s: SlicePoint, weight: str = "standard") -> Tuple[float, float]:
        """(max |{q_i, θ_j}_red − δ_ij|, max |{θ_i, θ_j}_red|)"""
        if s.d != 1:
            raise DimensionError(f"The spinless map needs d = 1, got d = {s.d}")
        return self.redpoisson.darboux_residual(s, self.theta_function(s.n, s.gamma, weight))

    @staticmethod
    def pair_log_derivative(q: np.ndarray, gamma: float, weight: str = "standard") -> np.ndarray:
        """ℓ'(q_i − q_j) for ℓ = log w, zero on the diagonal; odd in q_i − q_j"""
        q = np.asarray(q, dtype=float)
        x = 0.5 * (q[:, None] - q[None, :])
        sh2 = np.sinh(gamma) ** 2
        s2 = np.sin(x) ** 2
        off = ~np.eye(q.size, dtype=bool)
        out = np.zeros((q.size, q.size))
        if weight == "standard":
            out[off] = -sh2 * np.cos(x[off]) / (np.sin(x[off]) * (s2[off] + sh2))
        elif weight == "printed":
            out[off] = -sh2 * np.sin(x[off]) * np.cos(x[off]) / ((1.0 + s2[off]) * (1.0 + s2[off] + sh2))
        else:
            raise SpinRSError(f"Unknown pair weight: {weight}")
        return out

    def rs_equations(self, q: np.ndarray, theta: np.ndarray, gamma: float,
                     weight: str = "standard") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Hamilton's equations of H_RS in the Darboux pair (q, θ).

        Returns:
            (q̇ = ∂H/∂θ, θ̇ = −∂H/∂q, q̈) with q̈ the derivative of q̇ along the same flow
        """
        q = np.asarray(q, dtype=float)
        ell = self.pair_log_derivative(q, gamma, weight)
        terms = np.exp(2.0 * np.asarray(theta, dtype=float)) * np.prod(np.sqrt(self.pair_weight(q, gamma, weight)), axis=0)
        qdot = 2.0 * terms
        theta_dot = -0.5 * np.sum((terms[:, None] + terms[None, :]) * ell, axis=1)
        qddot = qdot * (2.0 * theta_dot + 0.5 * np.sum(ell * (qdot[:, None] - qdot[None, :]), axis=1))
        return qdot, theta_dot, qddot

    def spinless_newton(self, s: SlicePoint, weight: str = "standard") -> float:
        """
        Max deviation of the H_RS equations at the image of s from the d = 1 spin equations.

        Compares q̇ with 2F_jj and q̈ with the second-order spin equation, both pointwise.

        Raises:
            DimensionError: d ≠ 1
        """
        theta, _ = self.spinless_map(s, weight)
        qdot, _, qddot = self.rs_equations(s.q, theta, s.gamma, weight)
        q = np.asarray(s.q, dtype=float)
        velocity = float(np.max(np.abs(qdot - 2.0 * np.diag(s.F).real)))
        acceleration = float(np.max(np.abs(qddot - self.dynamics.newton_rhs(q, s.v, s.gamma))))
        return max(velocity, acceleration)

    # ==================== REPORT ====================

    def report(self, q: np.ndarray, p: np.ndarray, W: np.ndarray, gamma: float, spinless_state: SlicePoint,
               eps_list: Sequence[float] = (1e-2, 1e-3), weight: str = "standard") -> LimitsReport:
        errors = self.gh_limit_check(q, p, W, eps_list, gamma)
        ratio: Optional[float] = None
        if len(errors) >= 2 and errors[1] > 0.0:
            ratio = errors[0] / errors[1]
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        norm_residual = 0.0
        if np.any(W):
            norm_residual = float(np.max(np.abs(self.limit_spin_norms(self.normalize_spins(W, gamma), gamma) - 2.0 * gamma)))
        darboux, commutator = self.darboux_check(spinless_state, weight)
        newton = self.spinless_newton(spinless_state, weight)
        logger.info(f"Limits: GH errors {errors}, Darboux {darboux:.3e}, Newton {newton:.3e}")
        return LimitsReport(eps=list(eps_list), gh_errors=errors, gh_ratio=ratio,
                            symplectic_errors=self.gh_symplectic_errors(W, eps_list),
                            spin_norm_residual=norm_residual, darboux_residual=darboux,
                            theta_commutator=commutator, newton_residual=newton)
