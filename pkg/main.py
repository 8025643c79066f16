"""
Spin RS laboratory - command-line entry point
Runs simulations, verification suites, rank sweeps, normal-form constructions and limit checks
"""
import argparse
import logging
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from config import settings
from errors import ConfigError, SpinRSError
from models import NormalFormReport, RunConfig, SimulationSummary, SlicePoint, Trajectory
from services.artifact_service import ArtifactService
from services.limits_service import LimitsService
from services.verification_service import SUITES, VerificationService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED = 2

AGREEMENT_TIMES = (0.5, 1.0, 2.0)

# Initialize services
limits_service = LimitsService()
reduction_service = limits_service.reduction
dynamics_service = limits_service.dynamics
verification_service = VerificationService(limits_service)
sampling_service = verification_service.sampling


# ==================== CONFIGURATION ====================

def load_config(path: str) -> RunConfig:
    """
    Read and validate a TOML run configuration

    Raises:
        ConfigError: unreadable file, invalid TOML or failed validation
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Failed to read config {path}: {str(e)}")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {str(e)}")


def _spin_block(re: Optional[List[List[float]]], im: Optional[List[List[float]]], shape: Sequence[int]) -> np.ndarray:
    block = np.asarray(re, dtype=float)
    if im is not None:
        block = block + 1j * np.asarray(im, dtype=float)
    if block.shape != tuple(shape):
        raise ConfigError(f"Spin block has shape {block.shape}, expected {tuple(shape)}")
    return block.astype(complex)


def _vector(values: Optional[List[float]], n: int, name: str) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    if out.shape != (n,):
        raise ConfigError(f"{name} has {out.size} entries, expected {n}")
    return out


def build_initial_state(cfg: RunConfig, rng: np.random.Generator) -> SlicePoint:
    """
    Gauge-slice initial state for the configured mode; missing optional data is drawn from rng.

    Raises:
        ConfigError: inconsistent data or a state outside the admissible region
    """
    n, d, gamma = cfg.system.n, cfg.system.d, cfg.system.gamma
    init = cfg.initial
    try:
        if init.mode == "normal-form":
            y = _vector(init.y, n, "y") if init.y is not None else sampling_service.random_normal_form_y(rng, n, gamma)
            return reduction_service.to_gauge_slice(reduction_service.normal_form_d(y, gamma, d))

        if init.mode == "s1-coords":
            if d < 2:
                raise ConfigError("s1-coords mode needs d ≥ 2")
            coords = sampling_service.random_s1_coords(rng, n, d, gamma)
            update = {}
            if init.y is not None:
                update["y"] = _vector(init.y, n, "y")
            if init.v_re is not None:
                update["v_rest"] = _spin_block(init.v_re, init.v_im, (d - 1, n))
            if init.tau_angles is not None:
                update["tau_angles"] = _vector(init.tau_angles, n, "tau_angles")
            if init.gamma_angles is not None:
                update["gamma_angles"] = _vector(init.gamma_angles, n, "gamma_angles")
            coords = coords.model_copy(update=update)
            return reduction_service.to_gauge_slice(reduction_service.slice_point_S1(coords))

        q = _vector(init.q, n, "q")
        if init.mode == "qpW":
            W = _spin_block(init.w_re, init.w_im, (d, n))
            W = reduction_service.spins.admissible_spins(W, gamma)
            pt = reduction_service.chart_qpW(q, _vector(init.p, n, "p"), W, gamma)
            return reduction_service.gauge_fix_plus(q, pt.v, gamma)

        return reduction_service.gauge_fix_plus(q, _spin_block(init.v_re, init.v_im, (d, n)), gamma)
    except ConfigError:
        raise
    except SpinRSError as e:
        raise ConfigError(f"Failed to build initial state ({init.mode}): {str(e)}")


# ==================== SIMULATE ====================

def _max_drift(traj: Trajectory) -> Dict[str, float]:
    """Largest relative deviation of each conserved observable from its initial value"""
    drift = {}
    for name, values in traj.observables.items():
        if name in ("constraint_residual", "gauge_violation"):
            continue
        values = np.asarray(values)
        drift[name] = float(np.max(np.abs(values - values[0])) / max(1.0, abs(values[0])))
    return drift


def cmd_simulate(args: argparse.Namespace) -> int:
    """
    Integrate from the configured initial state and write trajectory.csv and summary.json

    Returns:
        EXIT_OK, or EXIT_FAILED when a solver aborted
    """
    if not args.config:
        raise ConfigError("simulate needs --config")
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.rng.seed
    rng = np.random.default_rng(seed)
    s0 = build_initial_state(cfg, rng)

    integ = cfg.integrate
    ks = cfg.observables.k
    pairs = [tuple(p) for p in cfg.observables.pairs] or None
    if integ.solver == "exact":
        traj = dynamics_service.exact_integrate(s0, integ.h, integ.T, integ.sample_every, ks, pairs)
    else:
        traj = dynamics_service.rk4_integrate(s0, integ.h, integ.T, integ.sample_every, ks, pairs)

    agreement: Dict[str, float] = {}
    if integ.solver == "both" and not traj.abort_reason:
        times = [t for t in AGREEMENT_TIMES if t <= integ.T] or [integ.T]
        try:
            agreement = {f"{t:g}": dist for t, dist in dynamics_service.run_both(s0, integ.h, times).items()}
        except SpinRSError as e:
            logger.warning(f"Solver comparison failed: {str(e)}")
            traj = traj.model_copy(update={"abort_reason": f"solver comparison: {str(e)}"})

    newton = None
    if integ.solver != "exact":
        try:
            newton = dynamics_service.newton_residual(traj)
        except SpinRSError as e:
            logger.info(f"Newton residual skipped: {str(e)}")

    summary = SimulationSummary(
        n=cfg.system.n, d=cfg.system.d, gamma=cfg.system.gamma, solver=integ.solver,
        samples=len(traj.times), final_time=float(traj.times[-1]), max_drift=_max_drift(traj),
        solver_agreement=agreement,
        max_gauge_violation=float(np.max(traj.observables["gauge_violation"])),
        newton_residual=newton, abort_reason=traj.abort_reason,
    )
    artifacts = ArtifactService(args.out)
    artifacts.write_trajectory(traj)
    artifacts.write_report(summary, "summary.json", {"seed": seed})
    worst = max(summary.max_drift.values()) if summary.max_drift else 0.0
    print(f"simulate: {summary.samples} samples to t={summary.final_time:g}, max drift {worst:.3e}, "
          f"abort={summary.abort_reason or 'none'}")
    return EXIT_FAILED if summary.abort_reason else EXIT_OK


# ==================== VERIFY AND RANK ====================

def cmd_verify(args: argparse.Namespace) -> int:
    """Run one suite (or all) and write verify_<suite>.json"""
    seed = args.seed if args.seed is not None else 0
    names = list(SUITES) if args.suite == "all" else [args.suite]
    reports = [verification_service.run(name, seed, args.samples) for name in names]
    artifacts = ArtifactService(args.out)
    if len(reports) == 1:
        artifacts.write_report(reports[0], f"verify_{reports[0].suite}.json")
    else:
        artifacts.write_reports(reports, "verify_all.json")
    for report in reports:
        failed = [p.name for p in report.properties if not p.passed]
        print(f"verify {report.suite}: {'PASS' if report.passed else 'FAIL'}"
              + (f" ({', '.join(failed)})" if failed else ""))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def _system(args: argparse.Namespace):
    """(n, d, γ, seed) from flags, falling back to --config"""
    cfg = load_config(args.config) if args.config else None
    n = args.n if args.n is not None else (cfg.system.n if cfg else None)
    d = args.d if args.d is not None else (cfg.system.d if cfg else None)
    gamma = args.gamma if args.gamma is not None else (cfg.system.gamma if cfg else None)
    if n is None or d is None or gamma is None:
        raise ConfigError("n, d and gamma are needed (flags or --config)")
    if n < 1 or d < 1 or gamma <= 0:
        raise ConfigError(f"Invalid system n={n}, d={d}, gamma={gamma}")
    seed = args.seed if args.seed is not None else (cfg.rng.seed if cfg else 0)
    return n, d, gamma, seed, cfg


def cmd_rank(args: argparse.Namespace) -> int:
    """Jacobian rank sweep at random S1 points; writes rank.json"""
    n, d, gamma, seed, _ = _system(args)
    if d < 2:
        raise ConfigError("The rank test needs d ≥ 2")
    report = verification_service.run_rank(n, d, gamma, seed, args.samples)
    ArtifactService(args.out).write_report(report, "rank.json")
    print(f"rank n={n} d={d}: full {report.histogram_full} (expected {report.expected_full}), "
          f"hamiltonians {report.histogram_ham} (expected {report.expected_ham})")
    return EXIT_OK if report.passed else EXIT_FAILED


# ==================== NORMAL FORM AND LIMITS ====================

def cmd_normal_form(args: argparse.Namespace) -> int:
    """Construct the normal-form point for y and report its residuals"""
    n, d, gamma, seed, cfg = _system(args)
    rng = np.random.default_rng(seed)
    if cfg is not None and cfg.initial.y is not None:
        y = _vector(cfg.initial.y, n, "y")
    else:
        y = sampling_service.random_normal_form_y(rng, n, gamma)
    try:
        pt = reduction_service.normal_form_d(y, gamma, d)
    except SpinRSError as e:
        raise ConfigError(f"Failed to build normal form: {str(e)}")
    report = NormalFormReport(
        n=n, d=d, gamma=gamma, y=[float(x) for x in y], v_d_modulus=[float(x) for x in np.abs(pt.v[-1])],
        constraint_residual=reduction_service.constraint_residual(pt),
        moment_residual=reduction_service.moment_residual(reduction_service.extended_from_dressed(pt)),
        spectrum_residual=reduction_service.spectrum_residual(pt),
    )
    ArtifactService(args.out).write_report(report, "normal_form.json", {"seed": seed})
    print(f"normal-form n={n} d={d}: constraint {report.constraint_residual:.3e}, "
          f"moment {report.moment_residual:.3e}, spectrum {report.spectrum_residual:.3e}")
    return EXIT_OK


def cmd_limits(args: argparse.Namespace) -> int:
    """Scaling-limit and spinless-limit checks at a random chart point; writes limits.json"""
    n, d, gamma, seed, _ = _system(args)
    rng = np.random.default_rng(seed)
    q = sampling_service.random_angles(rng, n)
    p = 0.5 * rng.standard_normal(n)
    W = sampling_service.random_spins(rng, n, d)
    spinless = sampling_service.random_slice_point(rng, n, 1, gamma)
    report = limits_service.report(q, p, W, gamma, spinless, weight=args.weight)
    ArtifactService(args.out).write_report(report, "limits.json", {"seed": seed, "weight": args.weight})
    ok = (report.gh_ratio is not None and 5.0 <= report.gh_ratio <= 20.0
          and report.darboux_residual < 1e-8 and report.theta_commutator < 1e-8
          and report.newton_residual < 1e-7)
    ratio = f"{report.gh_ratio:.3g}" if report.gh_ratio is not None else "n/a"
    print(f"limits n={n} d={d}: GH ratio {ratio}, Darboux {report.darboux_residual:.3e}, "
          f"Newton {report.newton_residual:.3e}")
    return EXIT_OK if ok else EXIT_FAILED


# ==================== ENTRY POINT ====================

COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "rank": cmd_rank,
    "normal-form": cmd_normal_form,
    "limits": cmd_limits,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinrs", description="Trigonometric spin Ruijsenaars–Schneider laboratory")
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="Root seed (overrides [rng] seed)")
    parser.add_argument("--out", help="Output directory for tables and reports")
    parser.add_argument("--samples", type=int, default=20, help="Random samples for verify and rank")
    parser.add_argument("--suite", default="all", choices=["all", *SUITES], help="Verification suite")
    parser.add_argument("--n", type=int, help="Number of particles (rank, normal-form, limits)")
    parser.add_argument("--d", type=int, help="Number of spins per particle (rank, normal-form, limits)")
    parser.add_argument("--gamma", type=float, help="Coupling (rank, normal-form, limits)")
    parser.add_argument("--weight", default="standard", choices=["standard", "printed"],
                        help="Pair weight of the spinless map (limits)")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else settings.SPINRS_LOG_LEVEL,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        logger.error(f"Seed {args.seed} is outside the unsigned 64-bit range")
        return EXIT_CONFIG
    if args.samples < 0:
        logger.error("--samples must be non-negative")
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except SpinRSError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
