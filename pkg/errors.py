"""
Exception hierarchy for the spin RS laboratory
"""
from typing import Optional


class SpinRSError(Exception):
    """Base class for every error raised by the services"""


class ConfigError(SpinRSError):
    """Run configuration failed to parse or validate"""


class DimensionError(SpinRSError):
    """Array shapes do not agree with (n, d)"""


class IndexOutOfRangeError(SpinRSError):
    """Matrix or spin index outside 1..n (or 1..d)"""


class UnknownPairError(SpinRSError):
    """No closed-form bracket is registered for a pair of coordinate labels"""


class UnknownSuiteError(SpinRSError):
    """Verification suite name is not recognised"""


# ==================== LINEAR ALGEBRA ====================

class SingularMatrixError(SpinRSError):
    """Condition estimate above the configured bound"""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class NotPositiveDefiniteError(SpinRSError):
    """Cholesky pivot at or below tolerance"""


class NotHermitianError(SpinRSError):
    """Matrix fails the Hermiticity check"""


class StepTooLargeError(SpinRSError):
    """Consecutive points of a continuation path are too far apart"""


class EigenvalueCollisionError(SpinRSError):
    """Two eigenphases came closer than the regularity margin"""

    def __init__(self, message: str, gap: float, step: Optional[int] = None):
        super().__init__(message)
        self.gap = gap
        self.step = step


# ==================== PHASE SPACE ====================

class RegularityError(SpinRSError):
    """Q is not regular: two angles coincide within the margin"""


class BallBoundaryError(SpinRSError):
    """Point of the minus variant lies on or outside the unit ball"""


class ConstraintViolationError(SpinRSError):
    """Torus moment map or moment constraint is not satisfied"""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class InequalityViolationError(SpinRSError):
    """Normal-form eigenvalues violate y_i > e^{2γ} y_{i+1}"""


class InterlacingError(SpinRSError):
    """Spectra of L and L1 do not interlace"""


class CoordinateValidityError(SpinRSError):
    """Coordinates do not describe a point of the chart"""


class GaugeError(SpinRSError):
    """A component of U = Σ_α v(α) vanishes"""


class SamplingError(SpinRSError):
    """Random sampling gave up after the configured retries"""


# ==================== DYNAMICS ====================

class PoleError(SpinRSError):
    """Potential evaluated at a pole"""


class CollisionError(SpinRSError):
    """Two particles came closer than the collision margin"""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


class PositivityLossError(SpinRSError):
    """L = L(Q, v) stopped being positive definite"""

    def __init__(self, message: str, smallest_eigenvalue: float):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class TooFewSamplesError(SpinRSError):
    """Trajectory too short for a finite-difference estimate"""
