"""
Zakrzewski spin space C^n: bracket, moment map, symplectic form and the unit-ball variant
"""
import logging
from typing import Tuple

import numpy as np
from scipy.optimize import brentq

from config import settings
from errors import BallBoundaryError, ConstraintViolationError, DimensionError
from services.linalg_service import LinalgService
from services.poisson_service import PoissonService

logger = logging.getLogger(__name__)


def g_factors(w: np.ndarray) -> np.ndarray:
    """G_j = 1 + Σ_{k≥j} |w_k|² for j = 1..n+1 (index 0..n), G_{n+1} = 1"""
    tail = np.cumsum(np.abs(w[::-1]) ** 2)[::-1]
    return 1.0 + np.concatenate([tail, [0.0]])


def sgn_matrix(n: int) -> np.ndarray:
    """S[i, l] = sgn(i - l)"""
    idx = np.arange(n)
    return np.sign(idx[:, None] - idx[None, :]).astype(float)


class SpinService:
    """U(n)-covariant Poisson structure on C^n and its moment map"""

    def __init__(self, linalg: LinalgService = None, poisson: PoissonService = None):
        """Initialize spin service"""
        self.linalg = linalg or LinalgService()
        self.poisson = poisson or PoissonService()
        self.ball_margin = settings.SPINRS_BALL_MARGIN

    # ==================== BRACKETS ====================

    @staticmethod
    def zak_matrices(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Complex structure matrices of the spin bracket.

        Returns:
            (C, D) with C_il = {w_i, w_l} and D_il = {w_i, conj(w_l)}
        """
        w = np.asarray(w, dtype=complex)
        n = w.size
        S = sgn_matrix(n)
        mod2 = np.abs(w) ** 2
        C = 1j * S * np.outer(w, w)
        diag = 2.0 + mod2.sum() + S.T @ mod2
        D = 1j * np.outer(w, w.conj()) + 1j * np.diag(diag)
        return C, D

    def zak_tensor(self, w: np.ndarray) -> np.ndarray:
        """Real 2n×2n Poisson tensor in coordinates (Re w, Im w)"""
        C, D = self.zak_matrices(w)
        return self.poisson.complex_to_real(C, D, np.zeros(C.shape[0], dtype=bool))

    def zak_tensor_real(self, x: np.ndarray) -> np.ndarray:
        n = x.size // 2
        return self.zak_tensor(x[:n] + 1j * x[n:])

    def ham_vec_field(self, w: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """
        Hamiltonian vector field of H with ∇H = η.

        The gradient is the complex vector with dH(V) = Im(η† V).
        """
        w = np.asarray(w, dtype=complex)
        eta = np.asarray(eta, dtype=complex)
        X_u, _ = self.linalg.split_u_b(np.outer(w, eta.conj()))
        return X_u @ w - eta - 0.5 * (np.vdot(eta, w) + np.vdot(w, eta)) * w

    def bracket_linear(self, w: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> float:
        """{F, H}(w) for functions with gradients ξ and η at w"""
        return float(np.vdot(xi, self.ham_vec_field(w, eta)).imag)

    @staticmethod
    def complex_gradient(grad_real: np.ndarray) -> np.ndarray:
        """Complex gradient η from the real gradient in (Re w, Im w)"""
        n = grad_real.size // 2
        return grad_real[n:] - 1j * grad_real[:n]

    @staticmethod
    def real_gradient(eta: np.ndarray) -> np.ndarray:
        return np.concatenate([-eta.imag, eta.real])

    # ==================== MOMENT MAP ====================

    @staticmethod
    def moment_b(w: np.ndarray) -> np.ndarray:
        """Upper triangular b(w) with b b† = 1 + w w†"""
        w = np.asarray(w, dtype=complex)
        G = g_factors(w)
        scale = 1.0 / np.sqrt(G[:-1] * G[1:])
        b = np.triu(np.outer(w, w.conj()) * scale[None, :], 1)
        return b + np.diag(np.sqrt(G[:-1] / G[1:]))

    def moment_residual(self, w: np.ndarray) -> float:
        b = self.moment_b(w)
        w = np.asarray(w, dtype=complex)
        return float(np.max(np.abs(b @ b.conj().T - np.eye(w.size) - np.outer(w, w.conj()))))

    def moment_property_residual(self, w: np.ndarray, xi: np.ndarray, X: np.ndarray) -> float:
        """
        |Im(ξ† X w) − Im tr(X {F, b} b^{-1})| for F with constant gradient ξ.

        {F, b} = −db[V_F] with db taken by central differences along V_F.
        """
        w = np.asarray(w, dtype=complex)
        n = w.size
        V = self.ham_vec_field(w, xi)
        x = np.concatenate([w.real, w.imag])
        direction = np.concatenate([V.real, V.imag])
        db = self.poisson.directional_derivative(lambda y: self.moment_b(y[:n] + 1j * y[n:]), x, direction)
        b = self.moment_b(w)
        lhs = np.vdot(xi, X @ w).imag
        rhs = np.trace(X @ (-db) @ np.linalg.inv(b)).imag
        return float(abs(lhs - rhs))

    def covariance_residual(self, g: np.ndarray, w: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> float:
        """
        Poisson property of the action (g, w) ↦ g w on linear functions Im(ξ† w), Im(η† w).

        The U(n) side uses the Poisson–Lie bracket −⟨D'φ₁, g^{-1} (Dφ₂) g⟩.
        """
        gw = g @ w
        lhs = self.bracket_linear(gw, xi, eta)
        spin_side = self.bracket_linear(w, g.conj().T @ xi, g.conj().T @ eta)
        _, D_prime_1 = self.linalg.split_u_b(np.outer(w, xi.conj()) @ g)
        _, D_2 = self.linalg.split_u_b(g @ np.outer(w, eta.conj()))
        group_side = -np.trace(D_prime_1 @ g.conj().T @ D_2 @ g).imag
        return float(abs(lhs - spin_side - group_side))

    def modulus_commutator(self, w: np.ndarray) -> float:
        """max |{|w_i|², |w_k|²}|; these functions Poisson commute"""
        w = np.asarray(w, dtype=complex)
        n = w.size
        P = self.zak_tensor(w)
        grads = np.zeros((n, 2 * n))
        grads[np.arange(n), np.arange(n)] = 2.0 * w.real
        grads[np.arange(n), n + np.arange(n)] = 2.0 * w.imag
        return float(np.max(np.abs(grads @ P @ grads.T)))

    # ==================== SYMPLECTIC FORM ====================

    @staticmethod
    def symplectic_form(w: np.ndarray) -> np.ndarray:
        """Matrix Ω(e_a, e_b) of the spin symplectic form in (Re w, Im w)"""
        w = np.asarray(w, dtype=complex)
        n = w.size
        G = g_factors(w)
        eye = np.eye(2 * n)
        dw = eye[:n] + 1j * eye[n:]
        dwbar = eye[:n] - 1j * eye[n:]

        def wedge(a, b):
            return np.outer(a, b) - np.outer(b, a)

        omega = np.zeros((2 * n, 2 * n), dtype=complex)
        for k in range(n):
            omega += 0.5j / G[k] * wedge(dw[k], dwbar[k])
        for k in range(n - 1):
            dG = 2.0 * (w.real[k + 1:] @ eye[k + 1:n] + w.imag[k + 1:] @ eye[n + k + 1:])
            form = w[k].conjugate() * dw[k] - w[k] * dwbar[k]
            omega += 0.25j / (G[k] * G[k + 1]) * wedge(dG, form)
        return omega.real

    # ==================== TORUS MOMENT MAP ====================

    @staticmethod
    def torus_phi(W: np.ndarray) -> np.ndarray:
        """φ_j = ½ Σ_α log(G_j(w^α)/G_{j+1}(w^α)) ≥ 0; W has shape (d, n)"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        phi = np.zeros(W.shape[1])
        for w in W:
            G = g_factors(w)
            phi += 0.5 * np.log1p(np.abs(w) ** 2 / G[1:])
        return phi

    def phi_residual(self, W: np.ndarray, phi: np.ndarray) -> float:
        """max_j |Σ_α log G_j(w^α) − 2 Σ_{k≥j} φ_k|"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        log_prod = sum(np.log(g_factors(w)[:-1]) for w in W)
        tail = np.cumsum(np.asarray(phi)[::-1])[::-1]
        return float(np.max(np.abs(log_prod - 2.0 * tail)))

    def phi_bound_gap(self, W: np.ndarray) -> float:
        """exp(2Σφ) − 1 − Σ_α|w^α|², non-negative"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        return float(np.exp(2.0 * self.torus_phi(W).sum()) - 1.0 - np.sum(np.abs(W) ** 2))

    @staticmethod
    def torus_rescaling(W: np.ndarray, level: float) -> np.ndarray:
        """
        Squared column factors c_j² with φ(W diag(c)) = level·1.

        Solved from the last particle backwards through
        Σ_α log(1 + Σ_{k≥j} c_k² |w_k^α|²) = 2·level·(n − j + 1).

        Raises:
            ConstraintViolationError: a particle carries no spin or no factor is found
        """
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        mod2 = np.abs(W) ** 2
        n = W.shape[1]
        if np.any(mod2.sum(axis=0) == 0.0):
            raise ConstraintViolationError("A particle carries no spin; φ cannot be prescribed", level)
        c2 = np.zeros(n)
        tail = np.zeros(W.shape[0])
        for j in range(n - 1, -1, -1):
            target = 2.0 * level * (n - j)

            def excess(x: float) -> float:
                return float(np.sum(np.log1p(tail + x * mod2[:, j])) - target)

            hi = 1.0
            while excess(hi) <= 0.0:
                hi *= 2.0
                if hi > 1e300:
                    raise ConstraintViolationError(f"No rescaling reaches φ = {level} at particle {j}", excess(hi))
            c2[j] = brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-14)
            tail = tail + c2[j] * mod2[:, j]
        return c2

    def admissible_spins(self, W: np.ndarray, level: float) -> np.ndarray:
        """W with columns rescaled so that φ = level·1"""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        return W * np.sqrt(self.torus_rescaling(W, level))[None, :]

    # ==================== UNIT BALL VARIANT ====================

    @staticmethod
    def minus_matrices(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=complex)
        n = z.size
        S = sgn_matrix(n)
        mod2 = np.abs(z) ** 2
        C = 1j * S * np.outer(z, z)
        diag = mod2.sum() - 2.0 + S.T @ mod2
        D = 1j * np.outer(z, z.conj()) + 1j * np.diag(diag)
        return C, D

    def minus_variant(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Poisson tensor on the open unit ball and the factor b_- with b_- b_-† = 1 − z z†.

        Raises:
            BallBoundaryError: |z|² ≥ 1 − margin
        """
        z = np.asarray(z, dtype=complex)
        if z.ndim != 1:
            raise DimensionError(f"Expected a vector, got shape {z.shape}")
        norm2 = float(np.sum(np.abs(z) ** 2))
        if norm2 >= 1.0 - self.ball_margin:
            raise BallBoundaryError(f"|z|² = {norm2:.12f} is not inside the unit ball")
        C, D = self.minus_matrices(z)
        P = self.poisson.complex_to_real(C, D, np.zeros(z.size, dtype=bool))
        b_minus = self.linalg.cholesky_upper(np.eye(z.size) - np.outer(z, z.conj()))
        return P, b_minus

    def minus_tensor_real(self, x: np.ndarray) -> np.ndarray:
        n = x.size // 2
        C, D = self.minus_matrices(x[:n] + 1j * x[n:])
        return self.poisson.complex_to_real(C, D, np.zeros(n, dtype=bool))
