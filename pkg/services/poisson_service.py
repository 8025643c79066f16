"""
Poisson tensor plumbing: complex-to-real conversion, Jacobiators, Leibniz contractions
"""
import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

TensorFn = Callable[[np.ndarray], np.ndarray]


class PoissonService:
    """Generic operations on Poisson tensors given in real coordinates"""

    def __init__(self, step: float = 1e-3):
        """
        Args:
            step: base finite-difference step for directional derivatives
        """
        self.step = step

    # ==================== COORDINATES ====================

    @staticmethod
    def pack(values: np.ndarray, real_mask: np.ndarray) -> np.ndarray:
        """Complex coordinates c_a to the real vector (Re c, Im c of the non-real ones)"""
        values = np.asarray(values, dtype=complex)
        return np.concatenate([values.real, values.imag[~real_mask]])

    @staticmethod
    def unpack(x: np.ndarray, real_mask: np.ndarray) -> np.ndarray:
        m = real_mask.size
        values = np.asarray(x[:m], dtype=complex).copy()
        values[~real_mask] += 1j * x[m:]
        return values

    @staticmethod
    def complex_to_real(C: np.ndarray, D: np.ndarray, real_mask: np.ndarray) -> np.ndarray:
        """
        Real tensor from the complex structure matrices.

        Args:
            C: C_ab = {c_a, c_b}
            D: D_ab = {c_a, conj(c_b)}
            real_mask: True where c_a is real valued

        Returns:
            Antisymmetric matrix in the coordinate order of pack()
        """
        XX = 0.5 * (C + D).real
        YY = 0.5 * (D - C).real
        XY = 0.5 * (C - D).imag
        YX = 0.5 * (C + D).imag
        full = np.block([[XX, XY], [YX, YY]])
        keep = np.concatenate([np.ones(real_mask.size, dtype=bool), ~real_mask])
        return full[np.ix_(keep, keep)]

    # ==================== DERIVATIVES ====================

    def directional_derivative(self, fn: Callable, x: np.ndarray, u: np.ndarray, step: float = None):
        """Richardson-extrapolated central difference of fn at x along u"""
        norm = float(np.max(np.abs(u))) if u.size else 0.0
        if norm == 0.0:
            return 0.0 * np.asarray(fn(x))
        h = (step or self.step) / norm

        def central(hh):
            return (np.asarray(fn(x + hh * u)) - np.asarray(fn(x - hh * u))) / (2.0 * hh)

        return (4.0 * central(0.5 * h) - central(h)) / 3.0

    def numeric_gradient(self, fn: Callable, x: np.ndarray, step: float = None) -> np.ndarray:
        """Gradient of a (possibly complex, possibly array-valued) function; axis 0 runs over coordinates"""
        x = np.asarray(x, dtype=float)
        basis = np.eye(x.size)
        return np.stack([self.directional_derivative(fn, x, basis[a], step) for a in range(x.size)])

    def jacobiator(self, tensor_fn: TensorFn, x: np.ndarray, step: float = None) -> np.ndarray:
        """
        J_abc = Σ_d P_ad ∂_d P_bc + cyclic, with ∂ taken along the Hamiltonian vector fields.

        Central differences are exact up to roundoff when the structure
        functions are quadratic; otherwise Richardson extrapolation applies.
        """
        x = np.asarray(x, dtype=float)
        P = tensor_fn(x)
        dP = np.stack([self.directional_derivative(tensor_fn, x, P[a], step) for a in range(x.size)])
        return dP + np.einsum("bca->abc", dP) + np.einsum("cab->abc", dP)

    # ==================== CONTRACTIONS ====================

    @staticmethod
    def contract(P: np.ndarray, grad_f: np.ndarray, grad_h: np.ndarray):
        """{f, h} = ∇f · P · ∇h; complex gradients extend bilinearly"""
        return np.tensordot(np.tensordot(grad_f, P, axes=(0, 0)), grad_h, axes=(-1, 0))

    @staticmethod
    def wirtinger_contract(C: np.ndarray, D: np.ndarray, grad_f: np.ndarray, grad_f_bar: np.ndarray,
                           grad_h: np.ndarray, grad_h_bar: np.ndarray):
        """
        {f, h} from derivatives with respect to the complex coordinates c_a and their conjugates.

        Args:
            C: C_ab = {c_a, c_b}
            D: D_ab = {c_a, conj(c_b)}
            grad_f, grad_f_bar: ∂f/∂c_a and ∂f/∂conj(c_a), coordinate index on the last axis;
                real coordinates carry their whole derivative in grad_f and zero in grad_f_bar

        Returns:
            Scalar for 1-D gradients, matrix {f_i, h_j} for stacked ones
        """
        grad_h, grad_h_bar = np.asarray(grad_h).T, np.asarray(grad_h_bar).T
        return (grad_f @ C @ grad_h + grad_f @ D @ grad_h_bar
                + grad_f_bar @ D.conj() @ grad_h + grad_f_bar @ C.conj() @ grad_h_bar)

    @classmethod
    def wirtinger_scale(cls, C: np.ndarray, D: np.ndarray, grad_f: np.ndarray, grad_f_bar: np.ndarray,
                        grad_h: np.ndarray, grad_h_bar: np.ndarray):
        """Same contraction on absolute values; the roundoff scale of wirtinger_contract"""
        return np.real(cls.wirtinger_contract(np.abs(C), np.abs(D), np.abs(grad_f), np.abs(grad_f_bar),
                                              np.abs(grad_h), np.abs(grad_h_bar)))

    @staticmethod
    def antisymmetry_violation(P: np.ndarray) -> float:
        return float(np.max(np.abs(P + P.T))) if P.size else 0.0
