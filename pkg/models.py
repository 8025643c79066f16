"""
Pydantic models for run configuration, phase-space points and reports
"""
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# ==================== RUN CONFIGURATION MODELS ====================

class SystemSection(BaseModel):
    """[system] table: particle number, spin count and coupling"""
    n: int = Field(..., ge=1, le=16, description="Number of particles")
    d: int = Field(..., ge=1, le=8, description="Number of spin vectors per particle")
    gamma: float = Field(..., gt=0, description="Coupling constant γ")


class InitialSection(BaseModel):
    """[initial] table: how the initial state is built"""
    mode: Literal["normal-form", "s1-coords", "qpW", "explicit"] = "normal-form"
    y: Optional[List[float]] = Field(None, description="Eigenvalues of L (normal-form, s1-coords)")
    q: Optional[List[float]] = Field(None, description="Particle angles (qpW, explicit)")
    p: Optional[List[float]] = Field(None, description="Momenta (qpW)")
    v_re: Optional[List[List[float]]] = Field(None, description="Re v(α)_i, shape d×n (explicit) or (d-1)×n (s1-coords)")
    v_im: Optional[List[List[float]]] = Field(None, description="Im v(α)_i, same shape as v_re")
    w_re: Optional[List[List[float]]] = Field(None, description="Re w^α_i, shape d×n (qpW)")
    w_im: Optional[List[List[float]]] = Field(None, description="Im w^α_i, shape d×n (qpW)")
    tau_angles: Optional[List[float]] = Field(None, description="Angles t_j of τ (s1-coords)")
    gamma_angles: Optional[List[float]] = Field(None, description="Angles of Γ (s1-coords)")

    @model_validator(mode="after")
    def check_mode_fields(self):
        if self.mode == "explicit" and (self.q is None or self.v_re is None):
            raise ValueError("explicit mode needs q and v_re")
        if self.mode == "qpW" and (self.q is None or self.p is None or self.w_re is None):
            raise ValueError("qpW mode needs q, p and w_re")
        return self


class IntegrateSection(BaseModel):
    """[integrate] table"""
    h: float = Field(1e-3, gt=0, le=1e-2, description="RK4 step")
    T: float = Field(1.0, gt=0, description="Horizon")
    sample_every: int = Field(10, ge=1, description="Record every k-th step")
    solver: Literal["rk4", "exact", "both"] = "rk4"


class ObservablesSection(BaseModel):
    """[observables] table"""
    k: List[int] = Field(default_factory=lambda: [0, 1, 2], description="Powers k of I^k_{αβ}")
    pairs: List[Tuple[int, int]] = Field(default_factory=list, description="(α, β) pairs, 1-based; empty means all")

    @model_validator(mode="after")
    def check_powers(self):
        if any(k < 0 for k in self.k):
            raise ValueError("observable powers must be non-negative")
        return self


class RngSection(BaseModel):
    """[rng] table"""
    seed: int = Field(0, ge=0, lt=2**64)


class RunConfig(BaseModel):
    """Complete run configuration as read from TOML"""
    system: SystemSection
    initial: InitialSection = Field(default_factory=InitialSection)
    integrate: IntegrateSection = Field(default_factory=IntegrateSection)
    observables: ObservablesSection = Field(default_factory=ObservablesSection)
    rng: RngSection = Field(default_factory=RngSection)

    @model_validator(mode="after")
    def check_pairs(self):
        d = self.system.d
        for alpha, beta in self.observables.pairs:
            if not (1 <= alpha <= d and 1 <= beta <= d):
                raise ValueError(f"observable pair ({alpha}, {beta}) outside 1..{d}")
        return self


# ==================== PHASE SPACE MODELS ====================

class ArrayModel(BaseModel):
    """Base for models carrying numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class DoublePoint(ArrayModel):
    """Point of the Heisenberg double stored as (g_R, b_R)"""
    g_R: np.ndarray
    b_R: np.ndarray

    @property
    def n(self) -> int:
        return self.g_R.shape[0]

    @property
    def L(self) -> np.ndarray:
        return self.b_R @ self.b_R.conj().T


class ExtendedPoint(ArrayModel):
    """Point of M × C^{n×d}; W has shape (d, n)"""
    double: DoublePoint
    W: np.ndarray
    gamma: float


class DressedPoint(ArrayModel):
    """Point in dressed variables (g_R, L, v); v has shape (d, n)"""
    g_R: np.ndarray
    L: np.ndarray
    v: np.ndarray
    gamma: float

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def d(self) -> int:
        return self.v.shape[0]

    @property
    def F(self) -> np.ndarray:
        return self.v.T @ self.v.conj()


class SlicePoint(ArrayModel):
    """Gauge-slice state (Q diagonal, U_i > 0) with L rebuilt from (Q, v)"""
    q: np.ndarray
    v: np.ndarray
    gamma: float
    L: np.ndarray

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.v.shape[0]

    @property
    def Q(self) -> np.ndarray:
        return np.exp(1j * self.q)

    @property
    def F(self) -> np.ndarray:
        return self.v.T @ self.v.conj()

    @property
    def U(self) -> np.ndarray:
        return self.v.sum(axis=0)


GaugeState = SlicePoint


class QpWChart(ArrayModel):
    """Canonical chart (q, p, W) with φ(W) = γ·1"""
    q: np.ndarray
    p: np.ndarray
    W: np.ndarray
    gamma: float


class LaxStructure(ArrayModel):
    """Dynamical r-matrix data as n²×n² matrices; t₁₂ = −s₁₂ + s₂₁ − r₁₂"""
    r12: np.ndarray
    s12: np.ndarray
    t12: np.ndarray

    @property
    def n(self) -> int:
        return int(round(np.sqrt(self.r12.shape[0])))


class S1Coords(ArrayModel):
    """
    Coordinates on the S1 chart.

    v_rest holds v(1..d-1) with shape (d-1, n); v(1) is real positive.
    mu is derived (eigenvalues of L1) and filled in by the service.
    """
    y: np.ndarray
    v_rest: np.ndarray
    tau_angles: np.ndarray
    gamma_angles: np.ndarray
    gamma: float
    mu: Optional[np.ndarray] = None


class Rejection(ArrayModel):
    """(Q, v) does not define a positive definite L"""
    smallest_eigenvalue: float
    trace: float
    reason: str = "L is not positive definite"


class Trajectory(ArrayModel):
    """Sampled solution on the gauge slice"""
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    gamma: float
    observables: Dict[str, np.ndarray]
    abort_reason: Optional[str] = None
    step: float = 0.0


# ==================== REPORT MODELS ====================

class PropertyResult(BaseModel):
    """Outcome of one verified property"""
    name: str
    max_violation: float
    threshold: float
    passed: bool


class VerifyReport(BaseModel):
    """Report of a verification suite"""
    suite: str
    seed: int
    samples: int
    properties: List[PropertyResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)


class RankTrial(BaseModel):
    """Numeric ranks at one sampled S1 point"""
    index: int
    rank_full: int
    rank_ham: int


class RankReport(BaseModel):
    """Degenerate integrability rank histogram"""
    n: int
    d: int
    gamma: float
    seed: int
    expected_full: int
    expected_ham: int
    trials: List[RankTrial] = Field(default_factory=list)
    histogram_full: Dict[int, int] = Field(default_factory=dict)
    histogram_ham: Dict[int, int] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(t.rank_full == self.expected_full and t.rank_ham == self.expected_ham for t in self.trials)


class SimulationSummary(BaseModel):
    """Summary of a simulate run"""
    n: int
    d: int
    gamma: float
    solver: str
    samples: int
    final_time: float
    max_drift: Dict[str, float] = Field(default_factory=dict)
    solver_agreement: Dict[str, float] = Field(default_factory=dict)
    max_gauge_violation: float = 0.0
    newton_residual: Optional[float] = None
    abort_reason: Optional[str] = None


class NormalFormReport(BaseModel):
    """Constructed normal-form point and its residuals"""
    n: int
    d: int
    gamma: float
    y: List[float]
    v_d_modulus: List[float]
    constraint_residual: float
    moment_residual: float
    spectrum_residual: float


class LimitsReport(BaseModel):
    """Scaling-limit and spinless-limit checks"""
    eps: List[float]
    gh_errors: List[float]
    gh_ratio: Optional[float] = None
    symplectic_errors: List[float] = Field(default_factory=list)
    spin_norm_residual: float
    darboux_residual: float
    theta_commutator: float
    newton_residual: float
