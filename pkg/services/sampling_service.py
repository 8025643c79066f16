"""
Seeded random constructors for spins, chart data, slice points and S1 coordinates
"""
import logging
from typing import List, Tuple

import numpy as np

from config import settings
from errors import SamplingError, SpinRSError
from models import S1Coords, SlicePoint
from services.reduction_service import ReductionService

logger = logging.getLogger(__name__)


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """One independent generator per sample, spawned from a single seed"""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


class SamplingService:
    """Random admissible points for tests, verification suites and the CLI"""

    def __init__(self, reduction: ReductionService = None):
        """Initialize sampling service"""
        self.reduction = reduction or ReductionService()
        self.spins = self.reduction.spins
        self.linalg = self.reduction.linalg
        self.retries = settings.SPINRS_SAMPLING_RETRIES

    @staticmethod
    def random_spins(rng: np.random.Generator, n: int, d: int, scale: float = 1.0) -> np.ndarray:
        """Complex Gaussian spin block of shape (d, n)"""
        return scale * (rng.standard_normal((d, n)) + 1j * rng.standard_normal((d, n))) / np.sqrt(2.0)

    @staticmethod
    def random_angles(rng: np.random.Generator, n: int, min_gap: float = 0.3) -> np.ndarray:
        """
        n angles in (−π, π] with pairwise circular gaps above min_gap.

        Raises:
            SamplingError: min_gap too large for n
        """
        if n * min_gap >= 2.0 * np.pi:
            raise SamplingError(f"Cannot place {n} angles with gap {min_gap}")
        slack = 2.0 * np.pi - n * min_gap
        cuts = np.sort(rng.uniform(0.0, slack, n))
        q = cuts + min_gap * np.arange(n) + rng.uniform(-np.pi, np.pi)
        q = np.angle(np.exp(1j * q))
        return q[rng.permutation(n)]

    def random_chart(self, rng: np.random.Generator, n: int, d: int, gamma: float,
                     momentum_scale: float = 0.5) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(q, p, W) with regular q and φ(W) = γ·1"""
        q = self.random_angles(rng, n)
        p = momentum_scale * rng.standard_normal(n)
        W = self.spins.admissible_spins(self.random_spins(rng, n, d), gamma)
        return q, p, W

    def random_slice_point(self, rng: np.random.Generator, n: int, d: int, gamma: float) -> SlicePoint:
        """
        Gauge-slice state built from random chart data.

        Raises:
            SamplingError: no admissible point after the configured number of retries
        """
        last_error = None
        for _ in range(self.retries):
            try:
                q, p, W = self.random_chart(rng, n, d, gamma)
                pt = self.reduction.chart_qpW(q, p, W, gamma)
                return self.reduction.gauge_fix_plus(q, pt.v, gamma)
            except SpinRSError as e:
                last_error = e
        raise SamplingError(f"Failed to sample a slice point: {str(last_error)}")

    def random_s1_coords(self, rng: np.random.Generator, n: int, d: int, gamma: float) -> S1Coords:
        """
        S1 coordinates with interlacing spectra; y_l > e^{2γ} y_{l+1} leaves room for μ.

        Raises:
            SamplingError: d < 2 or no admissible point after the configured number of retries
        """
        if d < 2:
            raise SamplingError("S1 coordinates need d ≥ 2")
        e2 = np.exp(2.0 * gamma)
        last_error = None
        for _ in range(self.retries):
            ratios = e2 * rng.uniform(1.5, 3.0, n - 1)
            y = rng.uniform(0.5, 1.0) * np.concatenate([np.cumprod(ratios[::-1])[::-1], [1.0]])
            size = 0.3 * np.sqrt(y.min() * (e2 - 1.0) / max(d - 1, 1))
            v_rest = self.random_spins(rng, n, d - 1, size)
            v_rest[0] = np.abs(v_rest[0]) + 0.1 * size
            coords = S1Coords(y=y, v_rest=v_rest, tau_angles=rng.uniform(-np.pi, np.pi, n),
                              gamma_angles=rng.uniform(-np.pi, np.pi, n), gamma=gamma)
            try:
                self.reduction.slice_point_S1(coords)
                return coords
            except SpinRSError as e:
                last_error = e
        raise SamplingError(f"Failed to sample S1 coordinates: {str(last_error)}")

    def random_normal_form_y(self, rng: np.random.Generator, n: int, gamma: float) -> np.ndarray:
        """Decreasing y with y_i > e^{2γ} y_{i+1}"""
        ratios = np.exp(2.0 * gamma) * rng.uniform(1.2, 2.5, n - 1)
        return rng.uniform(0.5, 1.0) * np.concatenate([np.cumprod(ratios[::-1])[::-1], [1.0]])
