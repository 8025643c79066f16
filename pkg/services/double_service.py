"""
Heisenberg double of U(n): coordinate brackets, extended (g, L, v) structure, dressing and free flow
"""
import logging
from typing import Callable, List, Tuple

import numpy as np
from scipy import linalg as sla

from errors import DimensionError, IndexOutOfRangeError, SpinRSError, UnknownPairError
from models import DoublePoint
from services.linalg_service import LinalgService
from services.poisson_service import PoissonService
from services.spin_service import SpinService

logger = logging.getLogger(__name__)

# ("g", i, j), ("L", k, l), ("v", alpha, i); a trailing "bar" on the kind conjugates
Coordinate = Tuple[str, int, int]

_ORDER = {"g": 0, "L": 1, "v": 2}


def _delta(a: int, b: int) -> float:
    return 1.0 if a == b else 0.0


def _step(condition: bool) -> float:
    return 1.0 if condition else 0.0


def _sgn(x: int) -> float:
    return float((x > 0) - (x < 0))


class DoubleService:
    """Closed-form brackets on the Heisenberg double and the extended phase space"""

    def __init__(self, linalg: LinalgService = None, poisson: PoissonService = None, spins: SpinService = None):
        """Initialize double service"""
        self.linalg = linalg or LinalgService()
        self.poisson = poisson or PoissonService()
        self.spins = spins or SpinService(self.linalg, self.poisson)

    # ==================== POINTS ====================

    def make_point(self, g_R: np.ndarray, b_R: np.ndarray) -> DoublePoint:
        return DoublePoint(g_R=np.asarray(g_R, dtype=complex), b_R=np.asarray(b_R, dtype=complex))

    def point_from_K(self, K: np.ndarray) -> DoublePoint:
        _, g_R, _, b_R = self.linalg.iwasawa_decompose(K)
        return self.make_point(g_R, b_R)

    def left_factors(self, point: DoublePoint) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(b_L, g_L, K) of a point stored as (g_R, b_R)"""
        K = self.linalg.reconstruct_K(point.g_R, point.b_R)
        b_L, _, g_L, _ = self.linalg.iwasawa_decompose(K)
        return b_L, g_L, K

    def t13_residual(self, point: DoublePoint) -> float:
        """‖b_L^{-1} g_L − g_R^{-1} b_R‖_max"""
        b_L, g_L, _ = self.left_factors(point)
        lhs = np.linalg.solve(b_L, g_L)
        rhs = point.g_R.conj().T @ point.b_R
        return float(np.max(np.abs(lhs - rhs)))

    # ==================== DRINFELD AND HEISENBERG BRACKETS ====================

    @staticmethod
    def _check_indices(n: int, *indices: int) -> None:
        for idx in indices:
            if not 0 <= idx < n:
                raise IndexOutOfRangeError(f"Index {idx} outside 0..{n - 1}")

    def drinfeld_structure(self, K: np.ndarray, i: int, j: int, k: int, l: int, conj2: bool = False) -> complex:
        """
        {K_ij, K_kl}_− or {K_ij, conj(K_kl)}_− of the Drinfeld double.

        Args:
            K: point of GL(n, C)
            i, j, k, l: zero-based matrix indices
            conj2: conjugate the second entry

        Raises:
            IndexOutOfRangeError: an index is outside 0..n-1
        """
        self._check_indices(K.shape[0], i, j, k, l)
        return complex(self._g_g(K, i, j, k, l, conj2))

    def heis_structure_gb(self, g: np.ndarray, b: np.ndarray, l: int, m: int, j: int, k: int,
                          variant: str = "gb") -> complex:
        """
        {g_lm, b_jk}_+ (variant "gb") or {g_lm, conj(b_jk)}_+ (variant "gbbar") at (g_R, b_R) = (g, b).

        Raises:
            IndexOutOfRangeError: an index is outside 0..n-1
            UnknownPairError: unknown variant
        """
        n = g.shape[0]
        self._check_indices(n, l, m, j, k)
        if variant == "gb":
            value = 1j * _delta(j, l) * g[l, m] * b[j, k]
            if j < l <= k:
                value += 2j * g[j, m] * b[l, k]
            return complex(value)
        if variant == "gbbar":
            bc = b.conj()
            value = 1j * _delta(j, l) * g[l, m] * bc[j, k]
            if j == l:
                value += 2j * np.sum(g[j + 1:k + 1, m] * bc[j + 1:k + 1, k])
            return complex(value)
        raise UnknownPairError(f"Unknown (g, b) bracket variant: {variant}")

    def g_L_from_gb(self, g: np.ndarray, b: np.ndarray, l: int, m: int, j: int, k: int) -> complex:
        """{g_lm, L_jk} by the Leibniz rule over L_jk = Σ_s b_js conj(b_ks)"""
        n = g.shape[0]
        value = 0.0j
        for s in range(n):
            value += self.heis_structure_gb(g, b, l, m, j, s, "gb") * np.conj(b[k, s])
            value += b[j, s] * self.heis_structure_gb(g, b, l, m, k, s, "gbbar")
        return complex(value)

    # ==================== EXTENDED STRUCTURE ====================

    @staticmethod
    def _g_g(g, i, j, k, l, conj2):
        if not conj2:
            coef = _delta(i, k) + 2.0 * _step(i > k) - _delta(l, j) - 2.0 * _step(l > j)
            return 1j * g[k, j] * g[i, l] * coef
        gc = g.conj()
        value = 1j * g[i, j] * gc[k, l] * (_delta(i, k) - _delta(j, l))
        if i == k:
            value += 2j * np.sum(g[i + 1:, j] * gc[i + 1:, l])
        if j == l:
            value -= 2j * np.sum(g[i, :j] * gc[k, :j])
        return value

    @staticmethod
    def _g_L(g, L, i, j, k, l):
        value = 1j * (_delta(i, k) + _delta(i, l)) * g[i, j] * L[k, l]
        if k < i:
            value += 2j * g[k, j] * L[i, l]
        if i == l:
            value += 2j * np.sum(L[k, i + 1:] * g[i + 1:, j])
        return value

    @staticmethod
    def _L_L(L, i, j, k, l):
        coef = 2.0 * _step(i > k) + _delta(i, k) - 2.0 * _step(j > l) - _delta(l, j)
        value = 1j * coef * L[i, l] * L[k, j] + 1j * (_delta(i, l) - _delta(j, k)) * L[i, j] * L[k, l]
        if i == l:
            value += 2j * np.sum(L[k, i + 1:] * L[i + 1:, j])
        if j == k:
            value -= 2j * np.sum(L[i, k + 1:] * L[k + 1:, l])
        return value

    @staticmethod
    def _v_L(v, L, alpha, i, k, l):
        value = -1j * (2.0 * _step(k > i) + _delta(i, k)) * v[alpha, k] * L[i, l]
        if i == l:
            value += 1j * v[alpha, i] * L[k, l] + 2j * np.sum(v[alpha, l + 1:] * L[k, l + 1:])
        return value

    @staticmethod
    def _v_g(v, g, alpha, i, k, l):
        value = -1j * _delta(i, k) * v[alpha, i] * g[k, l]
        if i < k:
            value -= 2j * v[alpha, k] * g[i, l]
        return value

    @staticmethod
    def _vbar_g(v, g, beta, i, k, l):
        vc = v.conj()
        value = -1j * _delta(i, k) * vc[beta, i] * g[k, l]
        if i == k:
            value -= 2j * np.sum(vc[beta, i + 1:] * g[i + 1:, l])
        return value

    @staticmethod
    def spin_pair(v, alpha, i, beta, k, conj2, L=None):
        """
        Dressed-spin brackets {v(α)_i, v(β)_k} and {v(α)_i, conj(v(β)_k)}.

        With L = None the last term uses the identity matrix, which gives the
        brackets of the half-dressed spins.
        """
        if not conj2:
            return (-1j * _sgn(k - i) + 1j * _sgn(beta - alpha)) * v[alpha, k] * v[beta, i]
        vc = v.conj()
        value = 0.0j
        if i == k:
            value += 1j * v[alpha, i] * vc[beta, k] + 2j * np.sum(v[alpha, k + 1:] * vc[beta, k + 1:])
        if alpha == beta:
            value += 1j * v[alpha, i] * vc[beta, k] + 2j * np.sum(v[:alpha, i] * vc[:alpha, k])
            value += 2j * (_delta(i, k) if L is None else L[i, k])
        return value

    def _core(self, g, L, v, a: Coordinate, b: Coordinate, conj_b: bool) -> complex:
        """{a, b} or {a, conj(b)} for unconjugated labels with a no later than b in g < L < v order"""
        kind_a, kind_b = a[0], b[0]
        if kind_b == "L" and conj_b:
            return self._core(g, L, v, a, ("L", b[2], b[1]), False)
        if kind_a == "g" and kind_b == "g":
            return self._g_g(g, a[1], a[2], b[1], b[2], conj_b)
        if kind_a == "g" and kind_b == "L":
            return self._g_L(g, L, a[1], a[2], b[1], b[2])
        if kind_a == "g" and kind_b == "v":
            if conj_b:
                return -self._vbar_g(v, g, b[1], b[2], a[1], a[2])
            return -self._v_g(v, g, b[1], b[2], a[1], a[2])
        if kind_a == "L" and kind_b == "L":
            return self._L_L(L, a[1], a[2], b[1], b[2])
        if kind_a == "L" and kind_b == "v":
            if conj_b:
                return -np.conj(self._v_L(v, L, b[1], b[2], a[2], a[1]))
            return -self._v_L(v, L, b[1], b[2], a[1], a[2])
        if kind_a == "v" and kind_b == "v":
            return self.spin_pair(v, a[1], a[2], b[1], b[2], conj_b, L)
        raise UnknownPairError(f"No bracket registered for ({kind_a}, {kind_b})")

    @staticmethod
    def _parse(label: Coordinate) -> Tuple[Coordinate, bool]:
        kind = label[0]
        conj = kind.endswith("bar")
        base = kind[:-3] if conj else kind
        if base not in _ORDER:
            raise UnknownPairError(f"Unknown coordinate kind: {kind}")
        return (base, int(label[1]), int(label[2])), conj

    def bracket(self, g: np.ndarray, L: np.ndarray, v: np.ndarray, a: Coordinate, b: Coordinate) -> complex:
        """Bracket of any two coordinate functions among g, L, v and their conjugates"""
        (base_a, conj_a), (base_b, conj_b) = self._parse(a), self._parse(b)
        if conj_a:
            return complex(np.conj(self._bracket_plain(g, L, v, base_a, base_b, not conj_b)))
        return complex(self._bracket_plain(g, L, v, base_a, base_b, conj_b))

    def _bracket_plain(self, g, L, v, a: Coordinate, b: Coordinate, conj_b: bool):
        if _ORDER[a[0]] > _ORDER[b[0]]:
            # {a, b} = −{b, a};  {a, conj b} = −conj({b, conj a})
            if conj_b:
                return -np.conj(self._core(g, L, v, b, a, True))
            return -self._core(g, L, v, b, a, False)
        return self._core(g, L, v, a, b, conj_b)

    def extended_structure(self, point: DoublePoint, v: np.ndarray, pair: Tuple[Coordinate, Coordinate]) -> complex:
        """
        Closed-form value of one bracket on the extended phase space in (g_R, L, v) variables.

        Args:
            point: (g_R, b_R) of the Heisenberg double
            v: dressed spins, shape (d, n)
            pair: two coordinate labels such as ("g", i, j), ("Lbar", k, l), ("v", alpha, i)

        Raises:
            UnknownPairError: a label kind is not g, L or v (optionally with "bar")
            IndexOutOfRangeError: an index is out of range
        """
        v = np.asarray(v, dtype=complex)
        n = point.n
        if v.ndim != 2 or v.shape[1] != n:
            raise DimensionError(f"Spin block shape {v.shape} does not match n = {n}")
        for label in pair:
            base, _ = self._parse(label)
            bound = v.shape[0] if base[0] == "v" else n
            if not 0 <= base[1] < bound or not 0 <= base[2] < n:
                raise IndexOutOfRangeError(f"Label {label} out of range")
        return self.bracket(point.g_R, point.L, v, pair[0], pair[1])

    # ==================== EXTENDED TENSOR ====================

    @staticmethod
    def coordinates(n: int, d: int) -> Tuple[List[Coordinate], np.ndarray]:
        """Complex coordinate list g_ij, L_kk, L_kl (k<l), v(α)_i and the mask of real ones"""
        labels: List[Coordinate] = [("g", i, j) for i in range(n) for j in range(n)]
        labels += [("L", k, k) for k in range(n)]
        labels += [("L", k, l) for k in range(n) for l in range(k + 1, n)]
        labels += [("v", a, i) for a in range(d) for i in range(n)]
        real_mask = np.array([lab[0] == "L" and lab[1] == lab[2] for lab in labels])
        return labels, real_mask

    @staticmethod
    def coordinate_values(g: np.ndarray, L: np.ndarray, v: np.ndarray, labels: List[Coordinate]) -> np.ndarray:
        source = {"g": g, "L": L, "v": v}
        return np.array([source[lab[0]][lab[1], lab[2]] for lab in labels], dtype=complex)

    def pack_extended(self, g: np.ndarray, L: np.ndarray, v: np.ndarray) -> np.ndarray:
        labels, real_mask = self.coordinates(g.shape[0], v.shape[0])
        return self.poisson.pack(self.coordinate_values(g, L, v, labels), real_mask)

    def unpack_extended(self, x: np.ndarray, n: int, d: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        labels, real_mask = self.coordinates(n, d)
        values = self.poisson.unpack(x, real_mask)
        g = values[:n * n].reshape(n, n)
        L = np.zeros((n, n), dtype=complex)
        offset = n * n
        L[np.diag_indices(n)] = values[offset:offset + n].real
        offset += n
        upper = np.triu_indices(n, 1)
        m = len(upper[0])
        L[upper] = values[offset:offset + m]
        L[(upper[1], upper[0])] = values[offset:offset + m].conj()
        v = values[offset + m:].reshape(d, n)
        return g, L, v

    def structure_matrices(self, g: np.ndarray, L: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(C, D, real_mask) over the coordinate list of coordinates()"""
        labels, real_mask = self.coordinates(g.shape[0], v.shape[0])
        m = len(labels)
        C = np.zeros((m, m), dtype=complex)
        D = np.zeros((m, m), dtype=complex)
        for a, la in enumerate(labels):
            for b, lb in enumerate(labels):
                C[a, b] = self._bracket_plain(g, L, v, la, lb, False)
                D[a, b] = self._bracket_plain(g, L, v, la, lb, True)
        return C, D, real_mask

    def extended_tensor(self, point: DoublePoint, v: np.ndarray) -> np.ndarray:
        """Real Poisson tensor on (Re/Im g_ij, L_kk, Re/Im L_kl, Re/Im v(α)_i)"""
        C, D, real_mask = self.structure_matrices(point.g_R, point.L, np.asarray(v, dtype=complex))
        return self.poisson.complex_to_real(C, D, real_mask)

    def extended_tensor_fn(self, n: int, d: int) -> Callable[[np.ndarray], np.ndarray]:
        def tensor(x: np.ndarray) -> np.ndarray:
            g, L, v = self.unpack_extended(x, n, d)
            C, D, real_mask = self.structure_matrices(g, L, v)
            return self.poisson.complex_to_real(C, D, real_mask)
        return tensor

    @staticmethod
    def reality_violation(C: np.ndarray, D: np.ndarray, real_mask: np.ndarray) -> float:
        """Antisymmetry of C, skew-Hermiticity of D, and C = D on real columns"""
        worst = max(np.max(np.abs(C + C.T)), np.max(np.abs(D + D.conj().T)))
        if real_mask.any():
            worst = max(worst, np.max(np.abs(C[:, real_mask] - D[:, real_mask])))
        return float(worst)

    # ==================== HALF-DRESSED SPINS ====================

    def half_dressed_matrices(self, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Structure matrices of the half-dressed spins V, shape (d, n), in row-major order"""
        d, n = V.shape
        labels = [(a, i) for a in range(d) for i in range(n)]
        m = len(labels)
        C = np.zeros((m, m), dtype=complex)
        D = np.zeros((m, m), dtype=complex)
        for p, (a, i) in enumerate(labels):
            for q, (b, k) in enumerate(labels):
                C[p, q] = self.spin_pair(V, a, i, b, k, False)
                D[p, q] = self.spin_pair(V, a, i, b, k, True)
        return C, D

    def half_dressed_tensor(self, V: np.ndarray) -> np.ndarray:
        C, D = self.half_dressed_matrices(np.asarray(V, dtype=complex))
        return self.poisson.complex_to_real(C, D, np.zeros(C.shape[0], dtype=bool))

    def half_dressed_tensor_fn(self, d: int, n: int) -> Callable[[np.ndarray], np.ndarray]:
        mask = np.zeros(d * n, dtype=bool)
        return lambda x: self.half_dressed_tensor(self.poisson.unpack(x, mask).reshape(d, n))

    def half_dressed(self, W: np.ndarray) -> np.ndarray:
        """v^α = b(w^1) ⋯ b(w^{α−1}) w^α"""
        W = np.asarray(W, dtype=complex)
        V = np.empty_like(W)
        B = np.eye(W.shape[1], dtype=complex)
        for alpha, w in enumerate(W):
            V[alpha] = B @ w
            B = B @ self.spins.moment_b(w)
        return V

    def half_dressed_chain_rule(self, W: np.ndarray) -> float:
        """
        Deviation between the closed-form half-dressed tensor and the push-forward
        of the product spin structure through W ↦ V.
        """
        W = np.asarray(W, dtype=complex)
        d, n = W.shape
        mask = np.zeros(d * n, dtype=bool)
        # block-diagonal product structure, coordinates (Re W, Im W) in row-major order
        P_W = np.zeros((2 * d * n, 2 * d * n))
        for alpha, w in enumerate(W):
            block = self.spins.zak_tensor(w)
            re = alpha * n + np.arange(n)
            im = d * n + re
            idx = np.concatenate([re, im])
            P_W[np.ix_(idx, idx)] = block

        def push(x):
            return self.poisson.pack(self.half_dressed(self.poisson.unpack(x, mask).reshape(d, n)).ravel(), mask)

        x = self.poisson.pack(W.ravel(), mask)
        J = self.poisson.numeric_gradient(push, x).T
        pushed = J @ P_W @ J.T
        closed = self.half_dressed_tensor(self.half_dressed(W))
        return float(np.max(np.abs(pushed - closed)))

    # ==================== DRESSING AND FREE FLOW ====================

    def dress(self, g: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Λ_L(g b); its Gram matrix is g b b† g^{-1}"""
        b_L, _, _, _ = self.linalg.iwasawa_decompose(g @ b)
        return b_L

    @staticmethod
    def flow_generator(L: np.ndarray, k: int = 1, hamiltonian: str = "h_k", gamma: float = None) -> np.ndarray:
        """i L^k for h_k = tr L^k / 2k, or 2i(e^{2γ} − 1) L for the RS Hamiltonian"""
        if hamiltonian == "rs":
            if gamma is None:
                raise SpinRSError("RS generator needs gamma")
            return 2j * np.expm1(2.0 * gamma) * L
        if hamiltonian != "h_k":
            raise UnknownPairError(f"Unknown free Hamiltonian: {hamiltonian}")
        if k < 1 or k > L.shape[0]:
            raise IndexOutOfRangeError(f"Power k = {k} outside 1..{L.shape[0]}")
        return 1j * np.linalg.matrix_power(L, k)

    def free_flow(self, point: DoublePoint, W: np.ndarray, k: int, t: float,
                  hamiltonian: str = "h_k", gamma: float = None) -> Tuple[DoublePoint, np.ndarray]:
        """
        Flow of a free Hamiltonian: g_R(t) = exp(t 𝒱(L)) g_R(0), b_R and W fixed.
        """
        generator = self.flow_generator(point.L, k, hamiltonian, gamma)
        g_t = sla.expm(t * generator) @ point.g_R
        logger.debug(f"Free flow k={k} t={t:.6g} ({hamiltonian})")
        return self.make_point(g_t, point.b_R), W
