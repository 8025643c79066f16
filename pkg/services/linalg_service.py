"""
Dense complex matrix kernel: Iwasawa and Cholesky factorizations, spectral routines
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla
from scipy.optimize import linear_sum_assignment

from config import settings
from errors import (
    EigenvalueCollisionError,
    NotHermitianError,
    NotPositiveDefiniteError,
    SingularMatrixError,
    StepTooLargeError,
)

logger = logging.getLogger(__name__)

Frame = Tuple[np.ndarray, np.ndarray]


def wrap_angle(x):
    """Map angles into (-π, π]"""
    y = np.mod(np.asarray(x) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def min_angular_gap(theta: np.ndarray) -> float:
    """Smallest distance on the circle between two distinct entries"""
    theta = np.asarray(theta, dtype=float)
    if theta.size < 2:
        return np.inf
    diff = np.abs(wrap_angle(theta[:, None] - theta[None, :]))
    diff[np.diag_indices_from(diff)] = np.inf
    return float(diff.min())


class LinalgService:
    """Factorizations and eigen-solvers shared by every other service"""

    def __init__(self):
        """Read tolerances from settings"""
        self.condition_bound = settings.SPINRS_CONDITION_BOUND
        self.pivot_tolerance = settings.SPINRS_PIVOT_TOLERANCE
        self.hermitian_tolerance = settings.SPINRS_HERMITIAN_TOLERANCE
        self.regularity_margin = settings.SPINRS_REGULARITY_MARGIN
        self.max_step = settings.SPINRS_MAX_CONTINUATION_STEP

    # ==================== FACTORIZATIONS ====================

    @staticmethod
    def _qr_positive(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """X = Q R with R upper triangular, positive diagonal"""
        Q, R = sla.qr(X)
        phase = np.diag(R) / np.abs(np.diag(R))
        return Q * phase[None, :], R * phase.conj()[:, None]

    @staticmethod
    def _rq_positive(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """X = R Q with R upper triangular, positive diagonal"""
        R, Q = sla.rq(X)
        phase = np.diag(R) / np.abs(np.diag(R))
        return R * phase.conj()[None, :], Q * phase[:, None]

    def iwasawa_decompose(self, K: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Both Iwasawa factorizations of an invertible matrix.

        Args:
            K: invertible n×n complex matrix

        Returns:
            (b_L, g_R, g_L, b_R) with K = b_L g_R^{-1} = g_L b_R^{-1}

        Raises:
            SingularMatrixError: condition estimate above the configured bound
        """
        K = np.asarray(K, dtype=complex)
        condition = np.linalg.cond(K)
        if not np.isfinite(condition) or condition > self.condition_bound:
            raise SingularMatrixError(f"Iwasawa input is singular (cond={condition:.3e})", condition)

        g_L, R = self._qr_positive(K)
        b_R = sla.solve_triangular(R, np.eye(K.shape[0], dtype=complex))

        b_L, Q = self._rq_positive(K)
        g_R = Q.conj().T
        return b_L, g_R, g_L, b_R

    def reconstruct_K(self, g_R: np.ndarray, b_R: np.ndarray) -> np.ndarray:
        """K with Ξ_R(K) = g_R and Λ_R(K) = b_R"""
        _, g_L = self._rq_positive(g_R.conj().T @ b_R)
        return g_L @ sla.solve_triangular(b_R, np.eye(b_R.shape[0], dtype=complex))

    def cholesky_upper(self, L: np.ndarray) -> np.ndarray:
        """
        Upper triangular b with positive diagonal such that L = b b†.

        Raises:
            NotPositiveDefiniteError: a pivot is at or below tolerance
        """
        L = np.asarray(L, dtype=complex)
        self._check_hermitian(L)
        J = np.eye(L.shape[0])[::-1]
        scale = max(float(np.max(np.abs(np.diag(L)))), 1e-300)
        try:
            C = sla.cholesky(J @ L @ J, lower=True)
        except sla.LinAlgError as e:
            raise NotPositiveDefiniteError(f"Failed to factor L: {str(e)}") from e
        pivots = np.abs(np.diag(C)) ** 2
        if pivots.min() <= self.pivot_tolerance * scale:
            raise NotPositiveDefiniteError(f"Cholesky pivot {pivots.min():.3e} below tolerance")
        return J @ C @ J

    # ==================== SPECTRAL ROUTINES ====================

    def _check_hermitian(self, A: np.ndarray) -> None:
        deviation = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
        if deviation > self.hermitian_tolerance * max(1.0, np.max(np.abs(A))):
            raise NotHermitianError(f"Matrix is not Hermitian (deviation {deviation:.3e})")

    @staticmethod
    def fix_column_phases(U: np.ndarray) -> np.ndarray:
        """Make the largest-modulus entry of every column real positive"""
        idx = np.argmax(np.abs(U), axis=0)
        pivot = U[idx, np.arange(U.shape[1])]
        return U * (pivot.conj() / np.abs(pivot))[None, :]

    def eig_hermitian(self, A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Eigen-decomposition with descending eigenvalues and fixed column phases.

        Returns:
            (λ, U) with A = U diag(λ) U†
        """
        A = np.asarray(A, dtype=complex)
        self._check_hermitian(A)
        lam, U = sla.eigh(0.5 * (A + A.conj().T))
        return lam[::-1].copy(), self.fix_column_phases(U[:, ::-1])

    def eig_unitary_smooth(self, g_path: Sequence[np.ndarray], prev: Optional[Frame] = None) -> List[Frame]:
        """
        Continue eigenphases and eigenvectors of a path of unitaries.

        Without prev the first frame follows eig_hermitian applied to −i·log g:
        principal phases in (−π, π] sorted in descending order, and the
        largest-modulus entry of each eigenvector real positive. Later frames
        are ordered and phased by maximal overlap with the previous one.

        Args:
            g_path: unitaries whose consecutive members differ by less than the step bound
            prev: optional (θ, V) frame the first point is matched against

        Returns:
            One (θ, V) per path point with g = V diag(e^{iθ}) V†; θ is unwrapped along the path

        Raises:
            StepTooLargeError: consecutive points too far apart
            EigenvalueCollisionError: two eigenphases closer than the regularity margin
        """
        frames: List[Frame] = []
        theta_prev, V_prev = (None, None) if prev is None else (np.asarray(prev[0], float), np.asarray(prev[1], complex))
        g_prev = None
        for step, g in enumerate(g_path):
            g = np.asarray(g, dtype=complex)
            if g_prev is not None:
                jump = float(np.max(np.abs(g - g_prev)))
                if jump >= self.max_step:
                    raise StepTooLargeError(f"Continuation step {step} moved {jump:.3e} in max-norm")
            T, Z = sla.schur(g, output="complex")
            phases = np.angle(np.diag(T))
            gap = min_angular_gap(phases)
            if gap < self.regularity_margin:
                raise EigenvalueCollisionError(f"Eigenphase gap {gap:.3e} at step {step}", gap, step)

            if V_prev is None:
                order = np.argsort(-phases, kind="stable")
                theta = phases[order]
                V = self.fix_column_phases(Z[:, order])
            else:
                _, col = linear_sum_assignment(-np.abs(V_prev.conj().T @ Z))
                Z = Z[:, col]
                overlap = np.einsum("ij,ij->j", V_prev.conj(), Z)
                V = Z * (overlap.conj() / np.abs(overlap))[None, :]
                theta = theta_prev + wrap_angle(phases[col] - theta_prev)
            frames.append((theta, V))
            theta_prev, V_prev, g_prev = theta, V, g
        return frames

    # ==================== LIE ALGEBRA HELPERS ====================

    @staticmethod
    def split_u_b(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """gl(n,C) = u(n) + b(n): anti-Hermitian part and upper triangular part with real diagonal"""
        lower = np.tril(X, -1)
        X_u = lower - lower.conj().T + 1j * np.diag(np.diag(X).imag)
        return X_u, X - X_u

    @staticmethod
    def pairing(X: np.ndarray, Y: np.ndarray) -> float:
        """Invariant pairing Im tr(XY)"""
        return float(np.trace(X @ Y).imag)

    # ==================== RANDOM MATRICES ====================

    def random_unitary(self, n: int, rng: np.random.Generator) -> np.ndarray:
        Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
        Q, _ = self._qr_positive(Z)
        return Q

    @staticmethod
    def random_upper_positive(n: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
        b = np.triu(scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))), 1)
        return b + np.diag(np.exp(scale * rng.standard_normal(n)))

    def random_positive_hermitian(self, n: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
        b = self.random_upper_positive(n, rng, scale)
        return b @ b.conj().T
