"""
Configuration settings for the spin RS laboratory
"""
import os

from pydantic import ConfigDict, Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings"""

    # Parallelism and logging
    SPINRS_THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    SPINRS_LOG_LEVEL: str = "INFO"

    # Linear algebra tolerances
    SPINRS_CONDITION_BOUND: float = 1e12
    SPINRS_PIVOT_TOLERANCE: float = 1e-14
    SPINRS_HERMITIAN_TOLERANCE: float = 1e-10
    SPINRS_REGULARITY_MARGIN: float = 1e-8
    SPINRS_MAX_CONTINUATION_STEP: float = 0.1

    # Phase space and dynamics
    SPINRS_COLLISION_MARGIN: float = 1e-6
    SPINRS_POSITIVITY_TOLERANCE: float = 1e-10
    SPINRS_POLE_TOLERANCE: float = 1e-12
    SPINRS_BALL_MARGIN: float = 1e-10
    SPINRS_INEQUALITY_MARGIN: float = 1e-10
    SPINRS_PHI_TOLERANCE: float = 1e-8
    SPINRS_ROTATION_TARGET: float = 0.05

    # Sampling and rank tests
    SPINRS_SAMPLING_RETRIES: int = 200
    SPINRS_RANK_THRESHOLD: float = 1e-7
    SPINRS_RANK_STEP: float = 1e-6

    model_config = ConfigDict(env_file=".env", case_sensitive=True, extra='ignore')


settings = Settings()
