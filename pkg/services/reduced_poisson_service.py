"""
Reduced Poisson bracket on the gauge slice, collective spins, Lax brackets, invariant algebra and rank test
"""
import logging
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from config import settings
from errors import (
    CollisionError,
    CoordinateValidityError,
    IndexOutOfRangeError,
    SpinRSError,
    UnknownPairError,
)
from models import DressedPoint, LaxStructure, S1Coords, SlicePoint
from services.double_service import DoubleService
from services.linalg_service import LinalgService, min_angular_gap
from services.poisson_service import PoissonService
from services.reduction_service import ReductionService
from services.spin_service import sgn_matrix

logger = logging.getLogger(__name__)

SliceLabel = Tuple  # ("q", j) | ("v", α, i) | ("vbar", α, i), all 0-based
ScalarFn = Callable[[np.ndarray], np.ndarray]
Gradient = Tuple[np.ndarray, np.ndarray]  # (∂/∂c_a, ∂/∂conj c_a) over a coordinate list


def invariant_I(L: np.ndarray, v: np.ndarray, k: int, alpha: int, beta: int) -> complex:
    """I^k_{αβ} = v(β)† L^k v(α)"""
    return complex(np.vdot(v[beta], np.linalg.matrix_power(L, k) @ v[alpha]))


def power_gradient(A: np.ndarray, left: np.ndarray, right: np.ndarray, k: int) -> np.ndarray:
    """∂(left · A^k · right)/∂A_ij for a row vector left and a column vector right"""
    n = A.shape[0]
    powers = [np.eye(n, dtype=complex)]
    for _ in range(1, k):
        powers.append(powers[-1] @ A)
    G = np.zeros((n, n), dtype=complex)
    for p in range(k):
        G += np.outer(left @ powers[p], powers[k - 1 - p] @ right)
    return G


def trace_power_gradient(A: np.ndarray, k: int) -> np.ndarray:
    """∂ tr A^k / ∂A_ij = k (A^{k−1})_ji"""
    if k == 0:
        return np.zeros(A.shape, dtype=complex)
    return k * np.linalg.matrix_power(A, k - 1).T.astype(complex)


def invariant_partials(A: np.ndarray, v: np.ndarray, k: int, alpha: int,
                       beta: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(∂/∂A, ∂/∂v, ∂/∂conj v) of v(β)† A^k v(α) with A, v and conj v independent"""
    Ak = np.linalg.matrix_power(A, k)
    dv = np.zeros(v.shape, dtype=complex)
    dv_bar = np.zeros(v.shape, dtype=complex)
    dv[alpha] += v[beta].conj() @ Ak
    dv_bar[beta] += Ak @ v[alpha]
    return power_gradient(A, v[beta].conj(), v[alpha], k), dv, dv_bar


def swap_matrix(n: int) -> np.ndarray:
    """P = Σ E_ab ⊗ E_ba, so that P X₁₂ P = X₂₁"""
    P = np.zeros((n * n, n * n))
    for a in range(n):
        for b in range(n):
            P[a * n + b, b * n + a] = 1.0
    return P


def lax_matrix(q: np.ndarray, v: np.ndarray, gamma: float) -> np.ndarray:
    """L_ij = F_ij / (e^{2γ} Q_j Q_i^{-1} − 1) with no positivity check"""
    F = v.T @ v.conj()
    return F / (np.exp(2.0 * gamma) * np.exp(1j * (q[None, :] - q[:, None])) - 1.0)


def _cot(z):
    return np.cos(z) / np.sin(z)


def _sgn(x: int) -> float:
    return float((x > 0) - (x < 0))


def _elementary(n: int, a: int, b: int) -> np.ndarray:
    E = np.zeros((n, n), dtype=complex)
    E[a, b] = 1.0
    return E


class ReducedPoissonService:
    """Closed-form reduced brackets on the gauge slice and their numerical oracles"""

    def __init__(self, reduction: ReductionService = None):
        """Initialize reduced Poisson service"""
        self.reduction = reduction or ReductionService()
        self.linalg: LinalgService = self.reduction.linalg
        self.double: DoubleService = self.reduction.double
        self.poisson: PoissonService = self.double.poisson
        self.collision_margin = settings.SPINRS_COLLISION_MARGIN
        self.rank_threshold = settings.SPINRS_RANK_THRESHOLD
        self.rank_step = settings.SPINRS_RANK_STEP

    # ==================== AUXILIARY MATRICES ====================

    @staticmethod
    def aux_matrices(s: SlicePoint) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Returns:
            (S⁰, R, S) where R has shape (d, n, n) with R[α] = R^α and S = S⁰ − conj(S⁰) entrywise
        """
        v, L = s.v, s.L
        d = v.shape[0]
        F = v.T @ v.conj()
        later = np.arange(d - 1, -1, -1, dtype=float)
        S0 = (0.25 * v.T @ sgn_matrix(d) @ v - 0.25 * F
              - 0.5 * (v.T * later[None, :]) @ v.conj() - 0.5 * d * L)
        R = np.empty((d, L.shape[0], L.shape[0]), dtype=complex)
        for alpha in range(d):
            sg = np.sign(np.arange(d) - alpha).astype(float)
            R[alpha] = (L - 0.5 * np.outer(sg @ v, v[alpha])
                        + 0.5 * np.outer(v[alpha], v[alpha].conj())
                        + v[:alpha].T @ v[:alpha].conj())
        return S0, R, S0 - S0.conj()

    def _check_collision(self, q: np.ndarray) -> None:
        gap = min_angular_gap(q)
        if gap < self.collision_margin:
            raise CollisionError(f"Particles too close for the reduced bracket: gap {gap:.3e}", gap)

    # ==================== BASIC BRACKETS ====================

    @staticmethod
    def _vv(s: SlicePoint, aux, a: int, i: int, c: int, j: int) -> complex:
        """{v(a)_i, v(c)_j}_red"""
        v, U, Q = s.v, s.U, s.Q
        _, R, S = aux
        value = (1j * _sgn(c - a) * v[a, j] * v[c, i]
                 + 1j * (v[a, i] / U[i]) * (v[c, j] / U[j]) * S[i, j]
                 + 1j * (v[c, j] / U[j]) * R[a][i, j]
                 - 1j * (v[a, i] / U[i]) * R[c][j, i])
        if i != j:
            ratio = (Q[i] + Q[j]) / (Q[i] - Q[j])
            value += 0.5j * ratio * (2.0 * v[a, j] * v[c, i] + v[a, i] * v[c, j]
                                     - U[i] / U[j] * v[a, j] * v[c, j]
                                     - U[j] / U[i] * v[a, i] * v[c, i])
        return complex(value)

    @staticmethod
    def _vvbar(s: SlicePoint, aux, a: int, i: int, e: int, j: int) -> complex:
        """{v(a)_i, conj v(e)_j}_red"""
        v, U, Q, L = s.v, s.U, s.Q, s.L
        vb = v.conj()
        _, R, S = aux
        value = 0j
        if a == e:
            value += 1j * (v[a, i] * vb[e, j] + 2.0 * np.sum(v[:a, i] * vb[:a, j]) + 2.0 * L[i, j])
        if i != j:
            ratio = (Q[i] + Q[j]) / (Q[i] - Q[j])
            value += 0.5j * ratio * (-v[a, i] * vb[e, j]
                                     + U[i] / U[j] * v[a, j] * vb[e, j]
                                     + U[j] / U[i] * v[a, i] * vb[e, i])
        value += (-1j * (v[a, i] / U[i]) * (vb[e, j] / U[j]) * S[i, j]
                  - 1j * (vb[e, j] / U[j]) * R[a][i, j]
                  - 1j * (v[a, i] / U[i]) * np.conj(R[e][j, i]))
        return complex(value)

    def _check_label(self, s: SlicePoint, label: SliceLabel) -> None:
        kind = label[0] if label else None
        if kind == "q" and len(label) == 2:
            if not 0 <= label[1] < s.n:
                raise IndexOutOfRangeError(f"Particle index {label[1]} outside 0..{s.n - 1}")
            return
        if kind in ("v", "vbar") and len(label) == 3:
            if not (0 <= label[1] < s.d and 0 <= label[2] < s.n):
                raise IndexOutOfRangeError(f"Spin label {label} outside d={s.d}, n={s.n}")
            return
        raise UnknownPairError(f"Unknown coordinate label: {label}")

    def reduced_structure(self, s: SlicePoint, pair: Tuple[SliceLabel, SliceLabel], aux=None) -> complex:
        """
        Value of {a, b}_red for gauge-slice coordinates a, b.

        Labels are ("q", j), ("v", α, i) or ("vbar", α, i), 0-based.

        Raises:
            UnknownPairError: malformed label
            IndexOutOfRangeError: index outside the dimensions of the state
        """
        a, b = pair
        self._check_label(s, a)
        self._check_label(s, b)
        aux = aux if aux is not None else self.aux_matrices(s)
        ka, kb = a[0], b[0]
        if ka == "q" and kb == "q":
            return 0j
        if ka == "q":
            return -self.reduced_structure(s, (b, a), aux)
        if kb == "q":
            if a[2] != b[1]:
                return 0j
            value = s.v[a[1], a[2]]
            return complex(-(value if ka == "v" else np.conj(value)))
        if ka == "v" and kb == "v":
            return self._vv(s, aux, a[1], a[2], b[1], b[2])
        if ka == "v" and kb == "vbar":
            return self._vvbar(s, aux, a[1], a[2], b[1], b[2])
        if ka == "vbar" and kb == "v":
            return -self._vvbar(s, aux, b[1], b[2], a[1], a[2])
        return complex(np.conj(self._vv(s, aux, a[1], a[2], b[1], b[2])))

    # ==================== REDUCED TENSOR ====================

    @staticmethod
    def slice_labels(n: int, d: int) -> Tuple[List[SliceLabel], np.ndarray]:
        labels: List[SliceLabel] = [("q", j) for j in range(n)]
        labels += [("v", a, i) for a in range(d) for i in range(n)]
        return labels, np.array([lab[0] == "q" for lab in labels])

    def structure_matrices(self, s: SlicePoint) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(C, D, real_mask) over (q_j, v(α)_i) with C_ab = {c_a, c_b}, D_ab = {c_a, conj c_b}"""
        labels, real_mask = self.slice_labels(s.n, s.d)
        aux = self.aux_matrices(s)
        m = len(labels)
        C = np.zeros((m, m), dtype=complex)
        D = np.zeros((m, m), dtype=complex)
        for p, la in enumerate(labels):
            for r, lb in enumerate(labels):
                C[p, r] = self.reduced_structure(s, (la, lb), aux)
                conj_b = lb if lb[0] == "q" else ("vbar",) + lb[1:]
                D[p, r] = self.reduced_structure(s, (la, conj_b), aux)
        return C, D, real_mask

    def reduced_tensor(self, s: SlicePoint) -> np.ndarray:
        """ReducedTensor on (q, Re v, Im v), v flattened row by row"""
        C, D, real_mask = self.structure_matrices(s)
        return self.poisson.complex_to_real(C, D, real_mask)

    @staticmethod
    def pack_slice(s: SlicePoint) -> np.ndarray:
        v = s.v.ravel()
        return np.concatenate([np.asarray(s.q, dtype=float), v.real, v.imag])

    @staticmethod
    def unpack_slice(x: np.ndarray, n: int, d: int, gamma: float) -> SlicePoint:
        q = np.asarray(x[:n], dtype=float)
        v = (x[n:n + n * d] + 1j * x[n + n * d:]).reshape(d, n)
        return SlicePoint(q=q, v=v, gamma=gamma, L=lax_matrix(q, v, gamma))

    def reduced_tensor_fn(self, n: int, d: int, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
        def tensor(x: np.ndarray) -> np.ndarray:
            return self.reduced_tensor(self.unpack_slice(x, n, d, gamma))
        return tensor

    def contract(self, s: SlicePoint, fn1: ScalarFn, fn2: ScalarFn, P: np.ndarray = None):
        """{f₁, f₂}_red by numeric gradients in (q, Re v, Im v); fn maps the packed vector to values"""
        x = self.pack_slice(s)
        P = self.reduced_tensor(s) if P is None else P
        return self.poisson.contract(P, self.poisson.numeric_gradient(fn1, x),
                                     self.poisson.numeric_gradient(fn2, x))

    # ==================== ANALYTIC GRADIENTS ====================

    @staticmethod
    def slice_gradient(s: SlicePoint, dL: np.ndarray, dv: np.ndarray, dv_bar: np.ndarray) -> Gradient:
        """
        Chain rule through L_ij = F_ij c_ij(q), c_ij = 1/(e^{2γ} Q_j Q_i^{-1} − 1).

        Args:
            s: gauge-slice point
            dL, dv, dv_bar: partials of a function of (L, v, conj v), all three treated as independent

        Returns:
            Gradient over the coordinates of slice_labels(): (q, v) and conj v
        """
        q = np.asarray(s.q, dtype=float)
        v = s.v
        c = 1.0 / (np.exp(2.0 * s.gamma) * np.exp(1j * (q[None, :] - q[:, None])) - 1.0)
        L = (v.T @ v.conj()) * c
        # ∂L_ij/∂q_m = i L_ij (1 + c_ij)(δ_mi − δ_mj)
        K = 1j * dL * L * (1.0 + c)
        dq = K.sum(axis=1) - K.sum(axis=0)
        dc = dL * c
        grad_v = dv + v.conj() @ dc.T
        grad_v_bar = dv_bar + v @ dc
        return (np.concatenate([dq, grad_v.ravel()]),
                np.concatenate([np.zeros(q.size, dtype=complex), grad_v_bar.ravel()]))

    def _stacked_slice_gradients(self, s: SlicePoint, partials: Sequence[Tuple]) -> Gradient:
        grads = [self.slice_gradient(s, *p) for p in partials]
        return np.array([g for g, _ in grads]), np.array([g for _, g in grads])

    def invariant_leibniz(self, M: int, N: int, alpha: int, beta: int, gam: int, eps: int,
                          s: SlicePoint) -> Tuple[complex, float]:
        """
        {I^M_{αβ}, I^N_{γε}}_red from exact gradients and the coordinate brackets.

        Returns:
            (bracket, roundoff scale of the contraction)
        """
        first = self.slice_gradient(s, *invariant_partials(s.L, s.v, M, alpha, beta))
        second = self.slice_gradient(s, *invariant_partials(s.L, s.v, N, gam, eps))
        C, D, _ = self.structure_matrices(s)
        return (complex(self.poisson.wirtinger_contract(C, D, *first, *second)),
                float(self.poisson.wirtinger_scale(C, D, *first, *second)))

    def reality_violation(self, s: SlicePoint) -> float:
        """max |{conj v(α)_i, v(ε)_j} − conj {v(α)_i, conj v(ε)_j}|"""
        aux = self.aux_matrices(s)
        worst = 0.0
        for a in range(s.d):
            for i in range(s.n):
                for e in range(s.d):
                    for j in range(s.n):
                        lhs = self.reduced_structure(s, (("vbar", a, i), ("v", e, j)), aux)
                        rhs = np.conj(self._vvbar(s, aux, a, i, e, j))
                        worst = max(worst, abs(lhs - rhs))
        return float(worst)

    def weight_residual(self, s: SlicePoint, scale: np.ndarray) -> float:
        """
        Structure functions at v(·)_j ↦ λ_j v(·)_j against λ-weighted values at the original point.

        A bracket of coordinates carrying weights e_i and e_j has weight e_i + e_j.
        """
        scale = np.asarray(scale, dtype=float)
        scaled_v = s.v * scale[None, :]
        scaled = SlicePoint(q=s.q, v=scaled_v, gamma=s.gamma, L=lax_matrix(np.asarray(s.q), scaled_v, s.gamma))
        C, D, real_mask = self.structure_matrices(s)
        C_s, D_s, _ = self.structure_matrices(scaled)
        weights = np.concatenate([np.ones(s.n), np.tile(scale, s.d)])
        W = np.outer(weights, weights)
        norm = max(1.0, float(np.max(np.abs(C_s))), float(np.max(np.abs(D_s))))
        return float(max(np.max(np.abs(C_s - W * C)), np.max(np.abs(D_s - W * D))) / norm)

    # ==================== EQUATIONS OF MOTION ====================

    def hamiltonian_flow(self, s: SlicePoint) -> Tuple[np.ndarray, np.ndarray]:
        """(q̇, v̇) = ({q, Σ F_kk}_red, {v, Σ F_kk}_red) by the Leibniz rule"""
        aux = self.aux_matrices(s)
        n, d = s.n, s.d
        v = s.v
        qdot = np.zeros(n)
        vdot = np.zeros((d, n), dtype=complex)
        for j in range(n):
            # {q_j, v} v̄ + {q_j, v̄} v, the two terms being conjugate
            qdot[j] = sum(2.0 * (self.reduced_structure(s, (("q", j), ("v", b, j)), aux) * np.conj(v[b, j])).real
                          for b in range(d))
        for a in range(d):
            for i in range(n):
                total = 0j
                for b in range(d):
                    for k in range(n):
                        total += self._vv(s, aux, a, i, b, k) * np.conj(v[b, k])
                        total += self._vvbar(s, aux, a, i, b, k) * v[b, k]
                vdot[a, i] = total
        return qdot, vdot

    # ==================== COLLECTIVE SPINS ====================

    def collective_bracket(self, s: SlicePoint, i: int, j: int, k: int, l: int) -> complex:
        """
        {F_ij, F_kl}_red in closed form.

        Raises:
            CollisionError: two angles within the collision margin
        """
        q = np.asarray(s.q, dtype=float)
        self._check_collision(q)
        for idx in (i, j, k, l):
            if not 0 <= idx < s.n:
                raise IndexOutOfRangeError(f"Particle index {idx} outside 0..{s.n - 1}")
        F, U = s.F, s.U
        _, _, S = self.aux_matrices(s)
        g = s.gamma

        def c(a: int, b: int) -> complex:
            return 0.0 if a == b else _cot((q[a] - q[b]) / 2.0)

        def cg(a: int, b: int) -> complex:
            return _cot((q[a] - q[b]) / 2.0 - 1j * g)

        value = 1j * (S[i, k] / (U[i] * U[k]) - S[l, j] / (U[l] * U[j])
                      + S[k, j] / (U[k] * U[j]) - S[i, l] / (U[i] * U[l])) * F[i, j] * F[k, l]
        value += 0.5 * (c(i, k) + c(j, l) + c(k, j) + c(l, i)) * F[i, j] * F[k, l]
        value += (c(i, k) + c(j, l) - cg(j, k) + cg(l, i)) * F[i, l] * F[k, j]
        value += 0.5 * (c(k, i) - cg(l, i)) * U[k] / U[i] * F[i, j] * F[i, l]
        value += 0.5 * (c(j, k) + cg(l, j)) * U[k] / U[j] * F[i, j] * F[j, l]
        value += 0.5 * (c(k, i) + cg(j, k)) * U[i] / U[k] * F[k, j] * F[k, l]
        value += 0.5 * (c(i, l) - cg(j, l)) * U[i] / U[l] * F[l, j] * F[k, l]
        value += 0.5 * (c(i, l) - cg(i, k)) * U[l] / U[i] * F[i, j] * F[k, i]
        value += 0.5 * (c(l, j) + cg(j, k)) * U[l] / U[j] * F[i, j] * F[k, j]
        value += 0.5 * (c(j, k) + cg(k, i)) * U[j] / U[k] * F[i, k] * F[k, l]
        value += 0.5 * (c(l, j) - cg(l, i)) * U[j] / U[l] * F[i, l] * F[k, l]
        return complex(value)

    def collective_bracket_leibniz(self, s: SlicePoint, i: int, j: int, k: int, l: int) -> complex:
        """{F_ij, F_kl}_red assembled from the coordinate brackets"""
        aux = self.aux_matrices(s)
        v, vb = s.v, s.v.conj()
        total = 0j
        for a in range(s.d):
            for b in range(s.d):
                total += vb[a, j] * vb[b, l] * self._vv(s, aux, a, i, b, k)
                total += vb[a, j] * v[b, k] * self._vvbar(s, aux, a, i, b, l)
                total -= v[a, i] * vb[b, l] * self._vvbar(s, aux, b, k, a, j)
                total += v[a, i] * v[b, k] * np.conj(self._vv(s, aux, a, j, b, l))
        return complex(total)

    @staticmethod
    def diagonal_collective(s: SlicePoint, j: int, k: int) -> complex:
        """{F_jj, F_kk}_red = F_jk F_kj · 2cot(q_jk/2)/(1 + sinh^{-2}γ sin²(q_jk/2))"""
        if j == k:
            return 0j
        x = (s.q[j] - s.q[k]) / 2.0
        force = 2.0 * _cot(x) / (1.0 + np.sin(x) ** 2 / np.sinh(s.gamma) ** 2)
        F = s.F
        return complex(F[j, k] * F[k, j] * force)

    # ==================== LAX BRACKETS ====================

    @staticmethod
    def lax_structure(s: SlicePoint) -> LaxStructure:
        """
        Dynamical r-matrix of the Lax matrix on the gauge slice.

        The coefficient of Σ E_aa ⊗ E_aa in r₁₂ is i/2, which makes
        r₁₂ + r₂₁ = 2iP − i·1 commute with L₁L₂.
        """
        n = s.n
        Q, U = s.Q, s.U
        _, _, S = ReducedPoissonService.aux_matrices(s)
        E = [[_elementary(n, a, b) for b in range(n)] for a in range(n)]
        r = np.zeros((n * n, n * n), dtype=complex)
        s12 = np.zeros((n * n, n * n), dtype=complex)
        for a in range(n):
            for b in range(n):
                diag = 1j * S[a, b] / (U[a] * U[b]) * np.kron(E[a][a], E[b][b])
                r += diag
                s12 -= diag
                if a == b:
                    continue
                wb = 1j * Q[b] / (Q[a] - Q[b])
                wa = 1j * Q[a] / (Q[a] - Q[b])
                r += wb * np.kron(E[a][a], E[b][b] - U[b] / U[a] * E[b][a])
                r -= wa * np.kron(E[a][b], U[a] / U[b] * E[b][b] - 2.0 * E[b][a])
                s12 += wa * np.kron(E[a][a], U[b] / U[a] * E[a][b] - E[b][b])
                s12 += wa * U[a] / U[b] * np.kron(E[a][b], E[b][b])
            r += 0.5j * np.kron(E[a][a], E[a][a])
            s12 += 0.5j * np.kron(E[a][a], E[a][a])
        P = swap_matrix(n)
        return LaxStructure(r12=r, s12=s12, t12=-s12 + P @ s12 @ P - r)

    @staticmethod
    def lax_rhs(L: np.ndarray, structure: LaxStructure) -> np.ndarray:
        """r₁₂L₁L₂ + L₁L₂t₁₂ − L₁s₂₁L₂ + L₂s₁₂L₁"""
        n = L.shape[0]
        P = swap_matrix(n)
        s21 = P @ structure.s12 @ P
        L1 = np.kron(L, np.eye(n))
        L2 = np.kron(np.eye(n), L)
        return (structure.r12 @ L1 @ L2 + L1 @ L2 @ structure.t12
                - L1 @ s21 @ L2 + L2 @ structure.s12 @ L1)

    def lax_bracket(self, s: SlicePoint) -> np.ndarray:
        """Σ {L_ij, L_kl}_red E_ij ⊗ E_kl by the Leibniz rule from the coordinate brackets"""
        n = s.n
        zero = np.zeros(s.v.shape, dtype=complex)
        G, G_bar = self._stacked_slice_gradients(
            s, [(_elementary(n, i, j), zero, zero) for i in range(n) for j in range(n)])
        C, D, _ = self.structure_matrices(s)
        B = self.poisson.wirtinger_contract(C, D, G, G_bar, G, G_bar).reshape(n, n, n, n)
        return B.transpose(0, 2, 1, 3).reshape(n * n, n * n)

    def lax_check(self, s: SlicePoint) -> float:
        """
        Max deviation of {L₁, L₂}_red from r₁₂L₁L₂ + L₁L₂t₁₂ − L₁s₂₁L₂ + L₂s₁₂L₁.

        Raises:
            CollisionError: two angles within the collision margin
        """
        self._check_collision(np.asarray(s.q, dtype=float))
        rhs = self.lax_rhs(s.L, self.lax_structure(s))
        return float(np.max(np.abs(self.lax_bracket(s) - rhs)))

    def lax_structure_violations(self, s: SlicePoint) -> Tuple[float, float]:
        """
        (antisymmetry, consistency) of the r-matrix data at s.

        antisymmetry is max |X₁₂ + P X₁₂ P| for X₁₂ the right side of the Lax bracket,
        which must vanish because {L₂, L₁} = −{L₁, L₂}; consistency is
        max |t₁₂ + s₁₂ − s₂₁ + r₁₂| relative to max(1, max |r₁₂|).
        """
        structure = self.lax_structure(s)
        P = swap_matrix(s.n)
        rhs = self.lax_rhs(s.L, structure)
        antisymmetry = float(np.max(np.abs(rhs + P @ rhs @ P)))
        consistency = float(np.max(np.abs(structure.t12 + structure.s12 - P @ structure.s12 @ P + structure.r12)))
        consistency /= max(1.0, float(np.max(np.abs(structure.r12))))
        return antisymmetry, consistency

    def trace_involution(self, s: SlicePoint, powers: Sequence[int] = (1, 2, 3)) -> float:
        """max |{tr L^j, tr L^k}_red|"""
        zero = np.zeros(s.v.shape, dtype=complex)
        G, G_bar = self._stacked_slice_gradients(s, [(trace_power_gradient(s.L, k), zero, zero) for k in powers])
        C, D, _ = self.structure_matrices(s)
        return float(np.max(np.abs(self.poisson.wirtinger_contract(C, D, G, G_bar, G, G_bar))))

    def darboux_residual(self, s: SlicePoint, momenta: ScalarFn) -> Tuple[float, float]:
        """
        (max |{q_i, p_j}_red − δ_ij|, max |{p_i, p_j}_red|) for functions p of the packed slice vector.
        """
        n = s.n

        def angles(y: np.ndarray) -> np.ndarray:
            return np.asarray(y[:n])

        P = self.reduced_tensor(s)
        qp = np.real(self.contract(s, angles, momenta, P))
        pp = np.real(self.contract(s, momenta, momenta, P))
        return float(np.max(np.abs(qp - np.eye(n)))), float(np.max(np.abs(pp)))

    def chart_momenta(self, n: int, d: int, gamma: float) -> ScalarFn:
        """p = log diag b_R with b_R the upper triangular factor of L(q, v)"""
        def momenta(y: np.ndarray) -> np.ndarray:
            L = lax_matrix(y[:n], (y[n:n + n * d] + 1j * y[n + n * d:]).reshape(d, n), gamma)
            return np.log(np.diag(self.linalg.cholesky_upper(L)).real)
        return momenta

    def chart_block_check(self, s: SlicePoint) -> Tuple[float, float]:
        return self.darboux_residual(s, self.chart_momenta(s.n, s.d, s.gamma))

    # ==================== INVARIANT ALGEBRA ====================

    @staticmethod
    def invariants_I(pt: Union[DressedPoint, SlicePoint], k: int, alpha: int, beta: int) -> complex:
        if k < 0:
            raise SpinRSError(f"Power k must be non-negative, got {k}")
        return invariant_I(pt.L, pt.v, k, alpha, beta)

    def invariant_algebra_bracket(self, M: int, N: int, alpha: int, beta: int, gam: int, eps: int,
                                  pt: Union[DressedPoint, SlicePoint]) -> complex:
        """{I^M_{αβ}, I^N_{γε}} in closed form; indices 0-based"""
        cache: Dict[Tuple[int, int, int], complex] = {}

        def I(k: int, a: int, b: int) -> complex:
            if (k, a, b) not in cache:
                cache[(k, a, b)] = invariant_I(pt.L, pt.v, k, a, b)
            return cache[(k, a, b)]

        d_ae = float(alpha == eps)
        d_gb = float(gam == beta)
        value = 2j * d_ae * I(M + N + 1, gam, beta) - 2j * d_gb * I(M + N + 1, alpha, eps)
        value += 1j * (d_ae - d_gb) * I(M, alpha, beta) * I(N, gam, eps)
        if d_ae:
            value += 2j * sum(I(N, gam, mu) * I(M, mu, beta) for mu in range(alpha))
        if d_gb:
            value -= 2j * sum(I(M, alpha, lam) * I(N, lam, eps) for lam in range(beta))
        value += 1j * _sgn(gam - alpha) * I(M, gam, beta) * I(N, alpha, eps)
        value -= 1j * _sgn(eps - beta) * I(N, gam, beta) * I(M, alpha, eps)
        for upper in (M, N):
            for b in range(upper):
                value += 1j * (I(b, gam, beta) * I(M + N - b, alpha, eps)
                               - I(M + N - b, gam, beta) * I(b, alpha, eps))
        return complex(value)

    @staticmethod
    def _f(g: np.ndarray, v: np.ndarray, m: int, alpha: int, beta: int) -> complex:
        return complex(np.vdot(v[beta], np.linalg.matrix_power(g, m) @ v[alpha]))

    def unreduced_f_brackets(self, pt: DressedPoint, M: int, N: int, alpha: int, beta: int,
                             gam: int, eps: int) -> Dict[str, complex]:
        """
        Closed forms on the unreduced space for f_m = tr g_R^m and f^{αβ}_m = v(β)† g_R^m v(α).

        Returns:
            {"f_f": {f_M, f_N}, "fs_f": {f^{αβ}_M, f_N}, "fs_fs": {f^{αβ}_M, f^{γε}_N}}
        """
        g, v, L = pt.g_R, pt.v, pt.L

        def f(m: int, a: int, b: int) -> complex:
            return self._f(g, v, m, a, b)

        def phi(mu: int, nu: int, a: int, c: int) -> complex:
            return complex(np.vdot(v[nu], np.linalg.matrix_power(g, a) @ L @ np.linalg.matrix_power(g, c) @ v[mu]))

        d_ae = float(alpha == eps)
        d_gb = float(gam == beta)
        value = 2j * sum(f(a, alpha, eps) * f(M + N - a, gam, beta) for a in range(1, M + 1))
        value -= 2j * sum(f(a, alpha, eps) * f(M + N - a, gam, beta) for a in range(1, N + 1))
        value += -1j * f(M, alpha, eps) * f(N, gam, beta) + 1j * f(N, alpha, eps) * f(M, gam, beta)
        value += 1j * _sgn(gam - alpha) * f(N, alpha, eps) * f(M, gam, beta)
        value -= 1j * _sgn(eps - beta) * f(M, alpha, eps) * f(N, gam, beta)
        value += 1j * (d_ae - d_gb) * f(M, alpha, beta) * f(N, gam, eps)
        if d_ae:
            value += 2j * sum(f(N, gam, mu) * f(M, mu, beta) for mu in range(alpha))
            value += 2j * phi(gam, beta, M, N)
        if d_gb:
            value -= 2j * sum(f(M, alpha, lam) * f(N, lam, eps) for lam in range(beta))
            value -= 2j * phi(alpha, eps, N, M)
        return {"f_f": 0j, "fs_f": complex(-2j * N * f(M + N, alpha, beta)), "fs_fs": complex(value)}

    def extended_gradient(self, n: int, d: int, dg: np.ndarray, dL: np.ndarray, dv: np.ndarray,
                          dv_bar: np.ndarray) -> Gradient:
        """
        Partials in (g, L, v, conj v) to the coordinate list of DoubleService.coordinates().

        L is Hermitian: L_kl with k < l is the coordinate and L_lk its conjugate.
        Functions here are holomorphic in g.
        """
        labels, _ = self.double.coordinates(n, d)
        grad = np.zeros(len(labels), dtype=complex)
        grad_bar = np.zeros(len(labels), dtype=complex)
        for p, (kind, a, b) in enumerate(labels):
            if kind == "g":
                grad[p] = dg[a, b]
            elif kind == "L":
                grad[p] = dL[a, b]
                if a != b:
                    grad_bar[p] = dL[b, a]
            else:
                grad[p], grad_bar[p] = dv[a, b], dv_bar[a, b]
        return grad, grad_bar

    def unreduced_gradient(self, pt: DressedPoint, kind: str, m: int, alpha: int = 0, beta: int = 0) -> Gradient:
        """
        Exact gradient on the unreduced space of

            "I":  I^m_{αβ} = v(β)† L^m v(α)
            "f":  f_m = tr g_R^m
            "fs": f^{αβ}_m = v(β)† g_R^m v(α)
        """
        n, d = pt.n, pt.d
        zero_n = np.zeros((n, n), dtype=complex)
        zero_v = np.zeros(pt.v.shape, dtype=complex)
        if kind == "I":
            dL, dv, dv_bar = invariant_partials(pt.L, pt.v, m, alpha, beta)
            return self.extended_gradient(n, d, zero_n, dL, dv, dv_bar)
        if kind == "f":
            return self.extended_gradient(n, d, trace_power_gradient(pt.g_R, m), zero_n, zero_v, zero_v)
        if kind == "fs":
            dg, dv, dv_bar = invariant_partials(pt.g_R, pt.v, m, alpha, beta)
            return self.extended_gradient(n, d, dg, zero_n, dv, dv_bar)
        raise SpinRSError(f"Unknown invariant kind: {kind}")

    def unreduced_bracket(self, pt: DressedPoint, first: Gradient, second: Gradient) -> Tuple[complex, float]:
        """
        {f₁, f₂} on the unreduced space in (g_R, L, v) variables.

        Returns:
            (bracket, roundoff scale of the contraction)
        """
        C, D, _ = self.double.structure_matrices(pt.g_R, pt.L, np.asarray(pt.v, dtype=complex))
        return (complex(self.poisson.wirtinger_contract(C, D, *first, *second)),
                float(self.poisson.wirtinger_scale(C, D, *first, *second)))

    # ==================== RANK TEST ====================

    @staticmethod
    def s1_vector(coords: S1Coords) -> np.ndarray:
        """(y, v(1), Re v(α), Im v(α) for α = 2..d−1, t, γ) as one real vector"""
        rest = np.atleast_2d(coords.v_rest)
        parts = [np.asarray(coords.y, dtype=float), rest[0].real]
        for row in rest[1:]:
            parts += [row.real, row.imag]
        parts += [np.asarray(coords.tau_angles, dtype=float), np.asarray(coords.gamma_angles, dtype=float)]
        return np.concatenate(parts)

    @staticmethod
    def s1_from_vector(x: np.ndarray, n: int, d: int, gamma: float) -> S1Coords:
        y = x[:n]
        rows = [x[n:2 * n].astype(complex)]
        offset = 2 * n
        for _ in range(d - 2):
            rows.append(x[offset:offset + n] + 1j * x[offset + n:offset + 2 * n])
            offset += 2 * n
        return S1Coords(y=y, v_rest=np.array(rows), tau_angles=x[offset:offset + n],
                        gamma_angles=x[offset + n:offset + 2 * n], gamma=gamma)

    def rank_functions(self, x: np.ndarray, n: int, d: int, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
        """(base, candidates): the functionally independent list and Re/Im I^k_{d,1}"""
        pt = self.reduction.slice_point_S1(self.s1_from_vector(x, n, d, gamma))
        L, v = pt.L, pt.v
        powers = range(1, n + 1)
        base = [np.trace(np.linalg.matrix_power(L, k)).real for k in powers]
        base += [invariant_I(L, v, k, 0, 0).real for k in powers]
        for alpha in range(1, d - 1):
            values = [invariant_I(L, v, k, alpha, 0) for k in powers]
            base += [z.real for z in values] + [z.imag for z in values]
        last = [invariant_I(L, v, k, d - 1, 0) for k in powers]
        candidates = [z.real for z in last] + [z.imag for z in last]
        return np.array(base), np.array(candidates)

    def _numeric_rank(self, J: np.ndarray) -> int:
        if J.size == 0:
            return 0
        sv = np.linalg.svd(J, compute_uv=False)
        return int(np.sum(sv > self.rank_threshold * sv[0])) if sv[0] > 0 else 0

    def jacobian_rank(self, coords: S1Coords) -> Tuple[int, int]:
        """
        Numeric ranks (rank_full, rank_ham) of the Jacobians of the integrals with respect to S1 coordinates.

        Raises:
            CoordinateValidityError: d < 2 or invalid S1 coordinates
        """
        y = np.asarray(coords.y)
        n = y.size
        d = np.atleast_2d(coords.v_rest).shape[0] + 1
        if d < 2:
            raise CoordinateValidityError("The rank test needs d ≥ 2")
        x0 = self.s1_vector(coords)
        self.reduction.slice_point_S1(coords)

        rows_base, rows_cand = [], []
        for a in range(x0.size):
            h = self.rank_step * max(1.0, abs(x0[a]))
            plus, minus = x0.copy(), x0.copy()
            plus[a] += h
            minus[a] -= h
            bp, cp = self.rank_functions(plus, n, d, coords.gamma)
            bm, cm = self.rank_functions(minus, n, d, coords.gamma)
            rows_base.append((bp - bm) / (2.0 * h))
            rows_cand.append((cp - cm) / (2.0 * h))
        J_base = np.array(rows_base).T
        J_cand = np.array(rows_cand).T

        rank_ham = self._numeric_rank(J_base[:n])
        selected = J_base
        remaining = list(range(J_cand.shape[0]))
        for _ in range(n):
            best, best_gain = None, -1.0
            for c in remaining:
                stacked = np.vstack([selected, J_cand[c]])
                norms = np.linalg.norm(stacked, axis=1, keepdims=True)
                gain = np.linalg.svd(stacked / np.where(norms > 0, norms, 1.0), compute_uv=False)[-1]
                if gain > best_gain:
                    best, best_gain = c, gain
            selected = np.vstack([selected, J_cand[best]])
            remaining.remove(best)
        rank_full = self._numeric_rank(selected)
        logger.debug(f"jacobian_rank n={n} d={d}: full={rank_full}, ham={rank_ham}")
        return rank_full, rank_ham
