"""
Gauge-fixed equations of motion, RK4 and exact (projection) solvers, dynamical checks
"""
import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla

from config import settings
from errors import (
    CollisionError,
    EigenvalueCollisionError,
    GaugeError,
    PoleError,
    PositivityLossError,
    SpinRSError,
    StepTooLargeError,
    TooFewSamplesError,
)
from models import Rejection, S1Coords, SlicePoint, Trajectory
from services.double_service import DoubleService
from services.linalg_service import LinalgService, min_angular_gap, wrap_angle
from services.reduced_poisson_service import invariant_I
from services.reduction_service import ReductionService

logger = logging.getLogger(__name__)


def _cot(z):
    return np.cos(z) / np.sin(z)


class DynamicsService:
    """Integrators and consistency checks for the spin RS flow on the gauge slice"""

    def __init__(self, reduction: ReductionService = None):
        """Initialize dynamics service"""
        self.reduction = reduction or ReductionService()
        self.linalg: LinalgService = self.reduction.linalg
        self.double: DoubleService = self.reduction.double
        self.collision_margin = settings.SPINRS_COLLISION_MARGIN
        self.pole_tolerance = settings.SPINRS_POLE_TOLERANCE
        self.rotation_target = settings.SPINRS_ROTATION_TARGET

    # ==================== POTENTIAL ====================

    def potential_V(self, x, gamma: float):
        """
        V(x) = cot x − cot(x − iγ).

        Raises:
            PoleError: sin x vanishes within the pole tolerance
        """
        x = np.asarray(x, dtype=complex)
        if np.any(np.abs(np.sin(x)) <= self.pole_tolerance):
            raise PoleError("Potential evaluated at a pole of cot")
        value = _cot(x) - _cot(x - 1j * gamma)
        return value if value.ndim else complex(value)

    @staticmethod
    def pair_force(x, gamma: float):
        """2 cot x / (1 + sinh^{-2}γ sin² x) = V(x) − V(−x) on the real line"""
        x = np.asarray(x, dtype=float)
        return 2.0 * _cot(x) / (1.0 + np.sin(x) ** 2 / np.sinh(gamma) ** 2)

    @staticmethod
    def hermite_residual(z: complex, a1: complex, a2: complex) -> float:
        lhs = _cot(z - a1) * _cot(z - a2)
        rhs = -1.0 + _cot(a1 - a2) * _cot(z - a1) + _cot(a2 - a1) * _cot(z - a2)
        return float(abs(lhs - rhs))

    # ==================== EQUATIONS OF MOTION ====================

    def check_collision(self, q: np.ndarray) -> None:
        gap = min_angular_gap(q)
        if gap < self.collision_margin:
            raise CollisionError(f"Particles collided: gap {gap:.3e}", gap)

    def _potential_matrix(self, q: np.ndarray, gamma: float) -> np.ndarray:
        """M[j, l] = V((q_l − q_j)/2) off the diagonal, 0 on it"""
        n = q.size
        X = 0.5 * (q[None, :] - q[:, None])
        off = ~np.eye(n, dtype=bool)
        M = np.zeros((n, n), dtype=complex)
        if n > 1:
            M[off] = self.potential_V(X[off], gamma)
        return M

    def _ieta(self, F: np.ndarray, M: np.ndarray, U: np.ndarray) -> np.ndarray:
        A = F * M
        if np.any(np.abs(U) == 0.0):
            raise GaugeError("𝒰 has a vanishing component")
        return 0.5 * ((A + A.T) @ U) / U

    def eom_rhs(self, s: SlicePoint) -> Tuple[np.ndarray, np.ndarray]:
        """
        (q̇, v̇) of the gauge-fixed flow generated by Σ_k F_kk.

        Raises:
            CollisionError: two angles closer than the collision margin
        """
        q = np.asarray(s.q, dtype=float)
        self.check_collision(q)
        F = s.F
        M = self._potential_matrix(q, s.gamma)
        ieta = self._ieta(F, M, s.U)
        K = -F * M
        vdot = s.v * ieta[None, :] + s.v @ K.T
        return 2.0 * np.diag(F).real, vdot

    def eom_rhs_kform(self, s: SlicePoint) -> Tuple[np.ndarray, np.ndarray]:
        """Same flow with K_kl = F_kl [cot((q_k − q_l)/2) − cot((q_k − q_l)/2 + iγ)]"""
        q = np.asarray(s.q, dtype=float)
        self.check_collision(q)
        n = q.size
        F = s.F
        K = np.zeros((n, n), dtype=complex)
        off = ~np.eye(n, dtype=bool)
        X = 0.5 * (q[:, None] - q[None, :])
        K[off] = F[off] * (_cot(X[off]) - _cot(X[off] + 1j * s.gamma))
        # V((q_l − q_j)/2) = −K_jl / F_jl, written through the same cot form
        A = np.zeros((n, n), dtype=complex)
        A[off] = -K[off]
        ieta = 0.5 * ((A + A.T) @ s.U) / s.U
        Z = np.diag(ieta)
        vdot = s.v @ (K + Z).T
        return 2.0 * np.diag(F).real, vdot

    def gauge_drift_rate(self, s: SlicePoint) -> float:
        """max_j |Im d𝒰_j/dt|"""
        _, vdot = self.eom_rhs(s)
        return float(np.max(np.abs(vdot.sum(axis=0).imag)))

    # ==================== OBSERVABLES ====================

    @staticmethod
    def observable_names(n: int, d: int, ks: Sequence[int], pairs: Sequence[Tuple[int, int]]) -> List[str]:
        names = [f"trL_{k}" for k in range(1, n + 1)]
        for k in ks:
            for a, b in pairs:
                names += [f"Re_I{k}_{a}{b}", f"Im_I{k}_{a}{b}"]
        return names + ["constraint_residual", "gauge_violation", "qdot_sum"]

    def observables(self, s: SlicePoint, ks: Sequence[int], pairs: Sequence[Tuple[int, int]]) -> Dict[str, float]:
        """Gauge-invariant observables of a slice point; pairs are 1-based (α, β)"""
        out: Dict[str, float] = {}
        L = s.L
        power = np.eye(s.n, dtype=complex)
        for k in range(1, s.n + 1):
            power = power @ L
            out[f"trL_{k}"] = float(np.trace(power).real)
        for k in ks:
            for a, b in pairs:
                value = invariant_I(L, s.v, k, a - 1, b - 1)
                out[f"Re_I{k}_{a}{b}"] = float(value.real)
                out[f"Im_I{k}_{a}{b}"] = float(value.imag)
        U = s.U
        out["constraint_residual"] = self.reduction.constraint_residual(s)
        out["gauge_violation"] = float(np.max(np.abs(U.imag)))
        out["qdot_sum"] = float(2.0 * np.trace(s.F).real)
        return out

    # ==================== RK4 ====================

    def _state(self, q: np.ndarray, v: np.ndarray, gamma: float) -> SlicePoint:
        L = self.reduction.L_from_Qv(q, gamma, v)
        if isinstance(L, Rejection):
            raise PositivityLossError(f"L lost positivity: λ_min = {L.smallest_eigenvalue:.3e}", L.smallest_eigenvalue)
        return SlicePoint(q=q, v=v, gamma=gamma, L=L)

    def _rhs_arrays(self, q: np.ndarray, v: np.ndarray, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
        F = v.T @ v.conj()
        self.check_collision(q)
        M = self._potential_matrix(q, gamma)
        U = v.sum(axis=0)
        ieta = self._ieta(F, M, U)
        return 2.0 * np.diag(F).real, v * ieta[None, :] + v @ (-F * M).T

    def rk4_integrate(self, s0: SlicePoint, h: float, T: float, sample_every: int = 1,
                      ks: Sequence[int] = (0, 1, 2), pairs: Optional[Sequence[Tuple[int, int]]] = None) -> Trajectory:
        """
        Classical fourth-order Runge–Kutta on (q, v); angles wrapped to (−π, π].

        A collision or loss of positivity stops the run and the partial trajectory
        is returned with abort_reason set.
        """
        if pairs is None:
            pairs = [(a, b) for a in range(1, s0.d + 1) for b in range(1, s0.d + 1)]
        steps = int(round(T / h))
        q = np.array(s0.q, dtype=float)
        v = np.array(s0.v, dtype=complex)
        gamma = s0.gamma
        times: List[float] = []
        qs: List[np.ndarray] = []
        vs: List[np.ndarray] = []
        records: List[Dict[str, float]] = []
        abort_reason = None

        def record(step_index: int, state: SlicePoint) -> None:
            times.append(step_index * h)
            qs.append(state.q.copy())
            vs.append(state.v.copy())
            records.append(self.observables(state, ks, pairs))

        state = s0
        record(0, state)
        for step in range(1, steps + 1):
            try:
                k1q, k1v = self._rhs_arrays(q, v, gamma)
                k2q, k2v = self._rhs_arrays(q + 0.5 * h * k1q, v + 0.5 * h * k1v, gamma)
                k3q, k3v = self._rhs_arrays(q + 0.5 * h * k2q, v + 0.5 * h * k2v, gamma)
                k4q, k4v = self._rhs_arrays(q + h * k3q, v + h * k3v, gamma)
                q = wrap_angle(q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q))
                v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
                state = self._state(q, v, gamma)
                self.check_collision(q)
            except (CollisionError, PositivityLossError, GaugeError, PoleError) as e:
                abort_reason = f"{type(e).__name__} at t={step * h:.6g}: {str(e)}"
                logger.warning(f"RK4 aborted: {abort_reason}")
                break
            if step % sample_every == 0:
                record(step, state)

        observables = {name: np.array([r[name] for r in records]) for name in records[0]}
        logger.info(f"RK4 finished: {len(times)} samples, h={h}, T={T}, abort={abort_reason}")
        return Trajectory(times=np.array(times), q=np.array(qs), v=np.array(vs), gamma=gamma,
                          observables=observables, abort_reason=abort_reason, step=h)

    # ==================== EXACT SOLUTION ====================

    def exact_solve(self, s0: SlicePoint, t: float, generator: str = "rs", k: int = 1) -> SlicePoint:
        """
        Solution by projection of the free flow: g_R(τ) = exp(τ 𝒱(L⁰)) Q⁰ is diagonalized
        smoothly along a mesh, and (Q, L, v)(t) = (diagonal, η L⁰ η^{-1}, η v⁰).

        Args:
            s0: initial slice point
            t: time (either sign)
            generator: "rs" for Σ F_kk, or "h_k" for tr L^k / 2k
            k: power used with "h_k"

        Raises:
            EigenvalueCollisionError: g_R(τ) stops being regular along the path
        """
        if t == 0.0:
            return s0
        hamiltonian = "rs" if generator == "rs" else "h_k"
        V_gen = self.double.flow_generator(s0.L, k, hamiltonian, s0.gamma)
        norm = max(float(np.linalg.norm(V_gen, 2)), 1e-300)
        steps = max(1, int(math.ceil(abs(t) * norm / self.rotation_target)))
        taus = np.linspace(0.0, t, steps + 1)
        Q0 = np.diag(s0.Q)
        step_generator = sla.expm((t / steps) * V_gen)
        path = [Q0]
        for _ in range(steps):
            path.append(step_generator @ path[-1])
        frames = self.linalg.eig_unitary_smooth(path, prev=(np.array(s0.q, dtype=float), np.eye(s0.n, dtype=complex)))
        theta, V = frames[-1]
        eta = V.conj().T
        v = s0.v @ eta.T
        logger.debug(f"exact_solve: {steps} mesh steps to t={taus[-1]:.6g}")
        return self.reduction.gauge_fix_plus(wrap_angle(theta), v, s0.gamma)

    def exact_integrate(self, s0: SlicePoint, h: float, T: float, sample_every: int = 1,
                        ks: Sequence[int] = (0, 1, 2), pairs: Optional[Sequence[Tuple[int, int]]] = None) -> Trajectory:
        """exact_solve chained over the sample grid of rk4_integrate; same Trajectory layout"""
        if pairs is None:
            pairs = [(a, b) for a in range(1, s0.d + 1) for b in range(1, s0.d + 1)]
        dt = h * sample_every
        samples = int(round(T / h)) // sample_every
        states = [s0]
        abort_reason = None
        for index in range(1, samples + 1):
            try:
                states.append(self.exact_solve(states[-1], dt))
            except (EigenvalueCollisionError, StepTooLargeError, GaugeError, PositivityLossError) as e:
                abort_reason = f"{type(e).__name__} at t={index * dt:.6g}: {str(e)}"
                logger.warning(f"Exact solver aborted: {abort_reason}")
                break
        records = [self.observables(s, ks, pairs) for s in states]
        observables = {name: np.array([r[name] for r in records]) for name in records[0]}
        logger.info(f"Exact solver finished: {len(states)} samples, dt={dt}, abort={abort_reason}")
        return Trajectory(times=dt * np.arange(len(states)), q=np.array([s.q for s in states]),
                          v=np.array([s.v for s in states]), gamma=s0.gamma, observables=observables,
                          abort_reason=abort_reason, step=dt)

    def state_distance(self, a: SlicePoint, b: SlicePoint) -> float:
        """max(|q_a − q_b| on the circle, |v_a − v_b|) between two gauge-fixed slice points"""
        dq = np.max(np.abs(wrap_angle(np.asarray(a.q) - np.asarray(b.q))))
        return float(max(dq, np.max(np.abs(a.v - b.v))))

    def invariant_distance(self, a: SlicePoint, b: SlicePoint, ks: Iterable[int] = (0, 1, 2)) -> float:
        """Largest deviation of tr L^k and I^k_{αβ} between two points"""
        worst = 0.0
        for k in range(1, a.n + 1):
            worst = max(worst, abs(np.trace(np.linalg.matrix_power(a.L, k) - np.linalg.matrix_power(b.L, k))))
        for k in ks:
            for alpha in range(a.d):
                for beta in range(a.d):
                    diff = invariant_I(a.L, a.v, k, alpha, beta) - invariant_I(b.L, b.v, k, alpha, beta)
                    worst = max(worst, abs(diff))
        return float(worst)

    # ==================== CHECKS ====================

    def newton_rhs(self, q: np.ndarray, v: np.ndarray, gamma: float) -> np.ndarray:
        """q̈_i = 2 Σ_{j≠i} |F_ij|² 2cot(q_ij/2)/(1 + sinh^{-2}γ sin²(q_ij/2))"""
        F = v.T @ v.conj()
        n = q.size
        X = 0.5 * (q[:, None] - q[None, :])
        off = ~np.eye(n, dtype=bool)
        force = np.zeros((n, n))
        force[off] = self.pair_force(X[off], gamma)
        return 2.0 * np.sum(np.abs(F) ** 2 * force, axis=1)

    def newton_residual(self, traj: Trajectory) -> float:
        """
        Max deviation between the finite-difference q̈ of a trajectory and the second-order equation.

        Raises:
            TooFewSamplesError: fewer than five uniform samples
        """
        times = np.asarray(traj.times)
        if times.size < 5:
            raise TooFewSamplesError(f"Need at least 5 samples, got {times.size}")
        dt = np.diff(times)
        if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
            raise TooFewSamplesError("Samples are not uniform in time")
        dt = dt[0]
        q = np.unwrap(np.asarray(traj.q), axis=0)
        qdd = (-q[4:] + 16.0 * q[3:-1] - 30.0 * q[2:-2] + 16.0 * q[1:-3] - q[:-4]) / (12.0 * dt ** 2)
        worst = 0.0
        for idx in range(2, times.size - 2):
            rhs = self.newton_rhs(np.asarray(traj.q[idx]), np.asarray(traj.v[idx]), traj.gamma)
            worst = max(worst, float(np.max(np.abs(qdd[idx - 2] - rhs))))
        return worst

    # ==================== ACTION-ANGLE FLOW ====================

    @staticmethod
    def action_angle_flow(coords: S1Coords, k: int, t: float) -> S1Coords:
        """Γ_j(t) = exp(i y_j^k t) Γ_j⁰; every other coordinate is constant"""
        angles = wrap_angle(np.asarray(coords.gamma_angles) + np.asarray(coords.y) ** k * t)
        return coords.model_copy(update={"gamma_angles": angles})

    def flow_s1_by_projection(self, coords: S1Coords, k: int, t: float) -> S1Coords:
        """
        Flow of tr L^k / 2k computed on the gauge slice by exact_solve and read back in S1 coordinates.
        """
        start = self.reduction.slice_point_S1(coords)
        s0 = self.reduction.to_gauge_slice(start)
        st = self.exact_solve(s0, t, generator="h_k", k=k)
        back = self.reduction.to_s1_gauge(self.reduction.slice_to_dressed(st))
        return self.reduction.s1_coordinates(back)

    def run_both(self, s0: SlicePoint, h: float, times: Sequence[float]) -> Dict[float, float]:
        """Gauge-fixed state distance between RK4 and exact_solve at the given times"""
        out: Dict[float, float] = {}
        for t in times:
            traj = self.rk4_integrate(s0, h, t, sample_every=int(round(t / h)), ks=(), pairs=[])
            if traj.abort_reason:
                raise SpinRSError(f"RK4 aborted before t={t}: {traj.abort_reason}")
            rk = self.reduction.gauge_fix_plus(traj.q[-1], traj.v[-1], s0.gamma)
            ex = self.exact_solve(s0, t)
            out[float(t)] = self.state_distance(rk, ex)
        return out
