"""
Verification suites: randomized property checks of every closed-form structure, and the rank sweep
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional

import numpy as np

from config import settings
from errors import SpinRSError, UnknownSuiteError
from models import PropertyResult, RankReport, RankTrial, VerifyReport
from services.limits_service import LimitsService
from services.reduced_poisson_service import ReducedPoissonService
from services.sampling_service import SamplingService, spawn_generators

logger = logging.getLogger(__name__)

Sample = Dict[str, float]

# property name -> threshold, in report order
SUITES: Dict[str, Dict[str, float]] = {
    "zakrzewski": {
        "jacobiator": 1e-8,
        "antisymmetry": 1e-12,
        "moment_map": 1e-12,
        "symplectic_inverse": 1e-10,
        "covariance": 1e-10,
        "moment_property": 1e-8,
        "modulus_involution": 1e-12,
        "ball_jacobiator": 1e-8,
        "ball_factor": 1e-12,
    },
    "double": {
        "reality": 1e-12,
        "antisymmetry": 1e-12,
        "jacobiator": 1e-8,
        "left_right_factors": 1e-10,
        "dressing_conjugation": 1e-11,
        "free_flow_unitarity": 1e-12,
        "g_L_leibniz": 1e-11,
        "half_dressed_chain_rule": 1e-8,
    },
    "reduction": {
        "constraint": 1e-10,
        "moment_map": 1e-9,
        "dressed_identity": 1e-10,
        "invertibility": 0.0,
        "gauge_idempotence": 1e-12,
        "chart_round_trip": 1e-8,
        "normal_form_constraint": 1e-10,
        "normal_form_moment_map": 1e-10,
        "normal_form_spectrum": 1e-10,
        "s1_constraint": 1e-10,
        "s1_round_trip": 1e-9,
    },
    "reduced-bracket": {
        "antisymmetry": 1e-12,
        "reality": 1e-12,
        "jacobiator": 1e-8,
        "slice_tangency": 1e-10,
        "flow_generation": 1e-10,
        "weight_homogeneity": 1e-10,
        "collective_closed_form": 1e-10,
        "collective_diagonal": 1e-10,
        "chart_darboux": 1e-8,
    },
    "lax": {
        "r_matrix": 1e-9,
        "r_matrix_antisymmetry": 1e-10,
        "r_matrix_consistency": 1e-12,
        "trace_involution": 1e-9,
    },
    "invariant-algebra": {
        "closed_form_reduced": 1e-9,
        "closed_form_unreduced": 1e-9,
        "f_trace_involution": 1e-9,
        "f_mixed": 1e-9,
        "f_spin_spin": 1e-9,
    },
    "limits": {
        "gh_ratio": 0.0,
        "gh_symplectic_order": 0.0,
        "limit_spin_norm": 1e-7,
        "spinless_darboux": 1e-8,
        "spinless_newton": 1e-9,
        "rank_one": 1e-12,
    },
}


def _relative(diff: float, scale: float) -> float:
    return float(diff) / max(1.0, float(scale))


class VerificationService:
    """Runs named property suites over independently seeded random samples"""

    def __init__(self, limits: LimitsService = None, sampling: SamplingService = None,
                 threads: Optional[int] = None):
        """Initialize verification service"""
        self.limits = limits or LimitsService()
        self.redpoisson: ReducedPoissonService = self.limits.redpoisson
        self.dynamics = self.limits.dynamics
        self.reduction = self.redpoisson.reduction
        self.double = self.reduction.double
        self.spins = self.reduction.spins
        self.linalg = self.reduction.linalg
        self.poisson = self.redpoisson.poisson
        self.sampling = sampling or SamplingService(self.reduction)
        self.threads = threads or settings.SPINRS_THREADS

    # ==================== RUNNER ====================

    def _checker(self, suite: str) -> Callable[[np.random.Generator], Sample]:
        if suite not in SUITES:
            raise UnknownSuiteError(f"Unknown verification suite: {suite} (choose from {', '.join(SUITES)})")
        return getattr(self, "_sample_" + suite.replace("-", "_"))

    def _guarded(self, suite: str, index: int, rng: np.random.Generator) -> Sample:
        try:
            return self._checker(suite)(rng)
        except SpinRSError as e:
            logger.warning(f"Sample {index} of suite {suite} failed: {str(e)}")
            return {name: float("inf") for name in SUITES[suite]}

    def run(self, suite: str, seed: int, samples: int) -> VerifyReport:
        """
        Evaluate every property of a suite on `samples` random points.

        Args:
            suite: one of SUITES
            seed: root seed; sample i uses the i-th spawned generator
            samples: number of random points (0 gives an empty, passing report)

        Returns:
            VerifyReport with the worst violation of each property

        Raises:
            UnknownSuiteError: suite name not recognised
        """
        self._checker(suite)
        report = VerifyReport(suite=suite, seed=seed, samples=samples)
        if samples <= 0:
            return report
        rngs = spawn_generators(seed, samples)
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            results: List[Sample] = list(executor.map(lambda item: self._guarded(suite, *item), enumerate(rngs)))

        for name, threshold in SUITES[suite].items():
            measured = [r[name] for r in results if name in r]
            if not measured:
                continue
            worst = float(max(measured))
            report.properties.append(PropertyResult(name=name, max_violation=worst, threshold=threshold,
                                                    passed=bool(worst <= threshold)))
        failed = [p.name for p in report.properties if not p.passed]
        logger.info(f"Suite {suite}: {samples} samples, {len(report.properties)} properties, failed {failed or 'none'}")
        return report

    # ==================== SUITES ====================

    def _sample_zakrzewski(self, rng: np.random.Generator) -> Sample:
        n = int(rng.integers(1, 5))
        w = self.sampling.random_spins(rng, n, 1)[0]
        x = np.concatenate([w.real, w.imag])
        P = self.spins.zak_tensor(w)
        out = {
            "jacobiator": _relative(float(np.max(np.abs(self.poisson.jacobiator(self.spins.zak_tensor_real, x)))),
                                    float(np.max(np.abs(P))) ** 2),
            "antisymmetry": self.poisson.antisymmetry_violation(P),
            "moment_map": self.spins.moment_residual(w),
            "symplectic_inverse": float(np.max(np.abs(self.spins.symplectic_form(w) @ P - np.eye(2 * n)))),
            "modulus_involution": self.spins.modulus_commutator(w),
        }
        g = self.linalg.random_unitary(n, rng)
        xi = self.sampling.random_spins(rng, n, 1)[0]
        eta = self.sampling.random_spins(rng, n, 1)[0]
        out["covariance"] = self.spins.covariance_residual(g, w, xi, eta)
        A = self.sampling.random_spins(rng, n, n)
        out["moment_property"] = self.spins.moment_property_residual(w, xi, A - A.conj().T)

        z = w / (np.linalg.norm(w) * rng.uniform(1.2, 3.0))
        _, b_minus = self.spins.minus_variant(z)
        y = np.concatenate([z.real, z.imag])
        out["ball_jacobiator"] = _relative(float(np.max(np.abs(self.poisson.jacobiator(self.spins.minus_tensor_real, y)))),
                                           float(np.max(np.abs(self.spins.minus_tensor_real(y)))) ** 2)
        out["ball_factor"] = float(np.max(np.abs(b_minus @ b_minus.conj().T - np.eye(n) + np.outer(z, z.conj()))))
        return out

    def _sample_double(self, rng: np.random.Generator) -> Sample:
        n = int(rng.integers(1, 3))
        d = int(rng.integers(1, 3))
        g = self.linalg.random_unitary(n, rng)
        b = self.linalg.random_upper_positive(n, rng)
        point = self.double.make_point(g, b)
        L = point.L
        v = self.sampling.random_spins(rng, n, d)

        C, D, real_mask = self.double.structure_matrices(g, L, v)
        P = self.poisson.complex_to_real(C, D, real_mask)
        x = self.double.pack_extended(g, L, v)
        out = {
            "reality": self.double.reality_violation(C, D, real_mask),
            "antisymmetry": self.poisson.antisymmetry_violation(P),
            "jacobiator": _relative(float(np.max(np.abs(self.poisson.jacobiator(self.double.extended_tensor_fn(n, d), x)))),
                                    float(np.max(np.abs(P))) ** 2),
            "left_right_factors": self.double.t13_residual(point),
        }

        h = self.linalg.random_unitary(n, rng)
        b_dressed = self.double.dress(h, b)
        out["dressing_conjugation"] = float(np.max(np.abs(
            b_dressed @ b_dressed.conj().T - h @ L @ h.conj().T)))

        flowed, _ = self.double.free_flow(point, v, 1, float(rng.uniform(-1.0, 1.0)))
        out["free_flow_unitarity"] = float(np.max(np.abs(flowed.g_R @ flowed.g_R.conj().T - np.eye(n))))

        worst = 0.0
        for l in range(n):
            for m in range(n):
                for j in range(n):
                    for k in range(n):
                        closed = self.double.extended_structure(point, v, (("g", l, m), ("L", j, k)))
                        worst = max(worst, abs(closed - self.double.g_L_from_gb(g, b, l, m, j, k)))
        out["g_L_leibniz"] = float(worst)
        out["half_dressed_chain_rule"] = self.double.half_dressed_chain_rule(self.sampling.random_spins(rng, n, d))
        return out

    def _sample_reduction(self, rng: np.random.Generator) -> Sample:
        n = int(rng.integers(2, 4))
        d = int(rng.integers(1, 4))
        gamma = float(rng.uniform(0.2, 0.8))
        s = self.sampling.random_slice_point(rng, n, d, gamma)
        pt = self.reduction.slice_to_dressed(s)
        ext = self.reduction.extended_from_dressed(pt)
        scale = float(np.max(np.abs(s.L)))
        out = {
            "constraint": _relative(self.reduction.constraint_residual(s), scale),
            "moment_map": self.reduction.moment_residual(ext),
            "dressed_identity": _relative(self.reduction.dressed_identity_residual(ext.double.b_R, ext.W), scale),
            "invertibility": max(0.0, -min(self.reduction.invertibility_margins(pt))),
        }
        again = self.reduction.gauge_fix_plus(s.q, s.v, gamma)
        out["gauge_idempotence"] = float(np.max(np.abs(again.v - s.v)))

        chart = self.reduction.chart_from_slice(s)
        rebuilt = self.reduction.chart_qpW(chart.q, chart.p, chart.W, gamma)
        out["chart_round_trip"] = _relative(max(float(np.max(np.abs(rebuilt.L - s.L))),
                                                float(np.max(np.abs(rebuilt.v - s.v)))), scale)

        y = self.sampling.random_normal_form_y(rng, n, gamma)
        nf = self.reduction.normal_form_d(y, gamma, d)
        out["normal_form_constraint"] = _relative(self.reduction.constraint_residual(nf), float(y.max()))
        out["normal_form_moment_map"] = self.reduction.moment_residual(self.reduction.extended_from_dressed(nf))
        out["normal_form_spectrum"] = _relative(self.reduction.spectrum_residual(nf), float(y.max()))

        if d >= 2:
            coords = self.sampling.random_s1_coords(rng, n, d, gamma)
            s1 = self.reduction.slice_point_S1(coords)
            back = self.reduction.s1_coordinates(s1)
            out["s1_constraint"] = _relative(self.reduction.constraint_residual(s1), float(coords.y.max()))
            out["s1_round_trip"] = float(max(
                np.max(np.abs(back.y - coords.y)),
                np.max(np.abs(back.v_rest - coords.v_rest)),
                np.max(np.abs(np.angle(np.exp(1j * (back.tau_angles - coords.tau_angles))))),
                np.max(np.abs(np.angle(np.exp(1j * (back.gamma_angles - coords.gamma_angles))))),
            ))
        return out

    def _sample_reduced_bracket(self, rng: np.random.Generator) -> Sample:
        n = int(rng.integers(2, 4))
        d = int(rng.integers(1, 3))
        gamma = float(rng.uniform(0.3, 1.0))
        s = self.sampling.random_slice_point(rng, n, d, gamma)
        rp = self.redpoisson
        P = rp.reduced_tensor(s)
        scale = float(np.max(np.abs(P)))
        x = rp.pack_slice(s)
        out = {
            "antisymmetry": _relative(self.poisson.antisymmetry_violation(P), scale),
            "reality": _relative(rp.reality_violation(s), scale),
            "jacobiator": _relative(float(np.max(np.abs(self.poisson.jacobiator(rp.reduced_tensor_fn(n, d, gamma), x)))),
                                    scale ** 2),
        }
        # Im 𝒰_i in the packed coordinates (q, Re v, Im v)
        im_u = np.zeros((n, x.size))
        for a in range(d):
            im_u[np.arange(n), n + n * d + a * n + np.arange(n)] = 1.0
        out["slice_tangency"] = _relative(float(np.max(np.abs(im_u @ P))), scale)

        qdot, vdot = rp.hamiltonian_flow(s)
        qdot_ref, vdot_ref = self.dynamics.eom_rhs(s)
        flow_scale = max(float(np.max(np.abs(qdot_ref))), float(np.max(np.abs(vdot_ref))))
        out["flow_generation"] = _relative(max(float(np.max(np.abs(qdot - qdot_ref))),
                                               float(np.max(np.abs(vdot - vdot_ref)))), flow_scale)
        out["weight_homogeneity"] = rp.weight_residual(s, rng.uniform(0.5, 2.0, n))

        F_scale = float(np.max(np.abs(s.F))) ** 2
        worst_closed, worst_diag = 0.0, 0.0
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    for l in range(n):
                        leibniz = rp.collective_bracket_leibniz(s, i, j, k, l)
                        worst_closed = max(worst_closed, abs(rp.collective_bracket(s, i, j, k, l) - leibniz))
                        if i == j and k == l:
                            worst_diag = max(worst_diag, abs(rp.diagonal_collective(s, i, k) - leibniz))
        out["collective_closed_form"] = _relative(worst_closed, F_scale)
        out["collective_diagonal"] = _relative(worst_diag, F_scale)
        out["chart_darboux"] = max(rp.chart_block_check(s))
        return out

    def _sample_lax(self, rng: np.random.Generator) -> Sample:
        n = int(rng.integers(2, 4))
        d = int(rng.integers(1, 3))
        gamma = float(rng.uniform(0.3, 1.0))
        s = self.sampling.random_slice_point(rng, n, d, gamma)
        scale = float(np.max(np.abs(s.L)))
        antisymmetry, consistency = self.redpoisson.lax_structure_violations(s)
        return {
            "r_matrix": _relative(self.redpoisson.lax_check(s), scale ** 2),
            "r_matrix_antisymmetry": _relative(antisymmetry, scale ** 2),
            "r_matrix_consistency": consistency,
            "trace_involution": _relative(self.redpoisson.trace_involution(s), scale ** 6),
        }

    def _sample_invariant_algebra(self, rng: np.random.Generator) -> Sample:
        n, d = 2, 2
        gamma = float(rng.uniform(0.3, 1.0))
        s = self.sampling.random_slice_point(rng, n, d, gamma)
        rp = self.redpoisson
        pt = self.reduction.slice_to_dressed(s)

        # deviations are measured against the roundoff scale of the Leibniz contraction
        worst = 0.0
        indices = [(a, b) for a in range(d) for b in range(d)]
        for M in range(3):
            for N in range(3):
                for alpha, beta in indices:
                    for gam, eps in indices:
                        closed = rp.invariant_algebra_bracket(M, N, alpha, beta, gam, eps, s)
                        leibniz, scale = rp.invariant_leibniz(M, N, alpha, beta, gam, eps, s)
                        worst = max(worst, _relative(abs(closed - leibniz), scale))
        out = {"closed_form_reduced": worst}

        M, N = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        alpha, beta, gam, eps = (int(i) for i in rng.integers(0, d, 4))
        closed = rp.invariant_algebra_bracket(M, N, alpha, beta, gam, eps, s)
        value, scale = rp.unreduced_bracket(pt, rp.unreduced_gradient(pt, "I", M, alpha, beta),
                                            rp.unreduced_gradient(pt, "I", N, gam, eps))
        out["closed_form_unreduced"] = _relative(abs(closed - value), scale)

        M, N = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        expected = rp.unreduced_f_brackets(pt, M, N, alpha, beta, gam, eps)
        pairs = {
            "f_trace_involution": ("f_f", ("f", M), ("f", N)),
            "f_mixed": ("fs_f", ("fs", M, alpha, beta), ("f", N)),
            "f_spin_spin": ("fs_fs", ("fs", M, alpha, beta), ("fs", N, gam, eps)),
        }
        for name, (key, first, second) in pairs.items():
            value, scale = rp.unreduced_bracket(pt, rp.unreduced_gradient(pt, *first),
                                                rp.unreduced_gradient(pt, *second))
            out[name] = _relative(abs(expected[key] - value), scale)
        return out

    def _sample_limits(self, rng: np.random.Generator) -> Sample:
        n = int(rng.integers(2, 4))
        d = int(rng.integers(1, 3))
        gamma = float(rng.uniform(0.3, 1.0))
        q = self.sampling.random_angles(rng, n)
        p = 0.5 * rng.standard_normal(n)
        W = self.sampling.random_spins(rng, n, d)

        errors = self.limits.gh_limit_check(q, p, W, (1e-2, 1e-3), gamma)
        ratio = errors[0] / errors[1] if errors[1] > 0.0 else float("inf")
        sym = self.limits.gh_symplectic_errors(W, (1e-2, 1e-3))
        norms = self.limits.limit_spin_norms(self.limits.normalize_spins(W, gamma), gamma)
        out = {
            "gh_ratio": max(0.0, 5.0 - ratio, ratio - 20.0),
            "gh_symplectic_order": max(0.0, sym[1] / sym[0] - 0.2) if sym[0] > 0.0 else 0.0,
            "limit_spin_norm": float(np.max(np.abs(norms - 2.0 * gamma))),
        }

        s = self.sampling.random_slice_point(rng, n, 1, gamma)
        out["spinless_darboux"] = max(self.limits.darboux_check(s))
        newton_scale = float(np.max(np.abs(self.limits.dynamics.newton_rhs(np.asarray(s.q), s.v, gamma))))
        out["spinless_newton"] = _relative(self.limits.spinless_newton(s), newton_scale)
        out["rank_one"] = _relative(self.limits.rank_one_residual(s), float(np.max(np.abs(s.F))) ** 2)
        return out

    # ==================== RANK SWEEP ====================

    def _rank_trial(self, index: int, rng: np.random.Generator, n: int, d: int, gamma: float) -> RankTrial:
        coords = self.sampling.random_s1_coords(rng, n, d, gamma)
        rank_full, rank_ham = self.redpoisson.jacobian_rank(coords)
        logger.debug(f"Rank trial {index}: full {rank_full}, hamiltonians {rank_ham}")
        return RankTrial(index=index, rank_full=rank_full, rank_ham=rank_ham)

    def run_rank(self, n: int, d: int, gamma: float, seed: int, samples: int) -> RankReport:
        """
        Numeric Jacobian ranks of the integrals at random S1 points.

        The full set is expected to have rank 2nd − n and the Hamiltonians tr L^k rank n.
        """
        report = RankReport(n=n, d=d, gamma=gamma, seed=seed, expected_full=2 * n * d - n, expected_ham=n)
        if samples <= 0:
            return report
        rngs = spawn_generators(seed, samples)
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            trials = list(executor.map(lambda item: self._rank_trial(item[0], item[1], n, d, gamma), enumerate(rngs)))
        report.trials.extend(sorted(trials, key=lambda t: t.index))
        for trial in report.trials:
            report.histogram_full[trial.rank_full] = report.histogram_full.get(trial.rank_full, 0) + 1
            report.histogram_ham[trial.rank_ham] = report.histogram_ham.get(trial.rank_ham, 0) + 1
        logger.info(f"Rank sweep n={n} d={d}: full {report.histogram_full}, hamiltonians {report.histogram_ham}")
        return report
