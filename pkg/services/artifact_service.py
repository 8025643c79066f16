"""
Artifact service for writing trajectory tables and JSON reports
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from errors import SpinRSError
from models import Trajectory

logger = logging.getLogger(__name__)


def round_significant(value: Any, digits: int = 3) -> Any:
    """Recursively round floats to a number of significant digits"""
    if isinstance(value, dict):
        return {k: round_significant(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_significant(v, digits) for v in value]
    if isinstance(value, float) and math.isfinite(value) and value != 0.0:
        return float(f"{value:.{digits}g}")
    return value


class ArtifactService:
    """Service for output artifacts under a run directory"""

    def __init__(self, out_dir: Optional[str] = None):
        """Initialize artifact service; nothing is written when out_dir is None"""
        self.out_dir = Path(out_dir) if out_dir else None
        if self.out_dir is not None:
            self._ensure_directory_exists()

    def _ensure_directory_exists(self):
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise SpinRSError(f"Failed to create output directory {self.out_dir}: {str(e)}")

    # ==================== TABLES ====================

    @staticmethod
    def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
        """
        One row per sample: t, q_i, Re/Im v(α)_i, tr L^k, Re/Im I^k_{αβ}, residuals.

        Spin and particle labels in column names are 1-based.
        """
        q = np.asarray(traj.q)
        v = np.asarray(traj.v)
        n = q.shape[1]
        d = v.shape[1]
        columns: Dict[str, np.ndarray] = {"t": np.asarray(traj.times)}
        for i in range(n):
            columns[f"q_{i + 1}"] = q[:, i]
        for part, fn in (("Re", np.real), ("Im", np.imag)):
            for a in range(d):
                for i in range(n):
                    columns[f"{part}_v{a + 1}_{i + 1}"] = fn(v[:, a, i])
        tail = ["constraint_residual", "gauge_violation", "qdot_sum"]
        for name, values in traj.observables.items():
            if name not in tail:
                columns[name] = np.asarray(values)
        for name in tail:
            if name in traj.observables:
                columns[name] = np.asarray(traj.observables[name])
        return pd.DataFrame(columns)

    def write_trajectory(self, traj: Trajectory, name: str = "trajectory.csv") -> Optional[Path]:
        """
        Write a trajectory table with round-trip float formatting

        Returns:
            Path written, or None without an output directory
        """
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        try:
            self.trajectory_frame(traj).to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise SpinRSError(f"Failed to write trajectory table: {str(e)}")
        logger.info(f"Wrote {len(traj.times)} samples to {path}")
        return path

    # ==================== REPORTS ====================

    @staticmethod
    def report_payload(report: BaseModel, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """{"raw": full-precision values, "rounded": 3-significant-digit copy}"""
        raw = report.model_dump(mode="json")
        if extra:
            raw.update(extra)
        return {"raw": raw, "rounded": round_significant(raw)}

    def write_report(self, report: BaseModel, name: str, extra: Optional[Dict[str, Any]] = None) -> Optional[Path]:
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        try:
            path.write_text(json.dumps(self.report_payload(report, extra), indent=2, sort_keys=True) + "\n")
        except (OSError, TypeError, ValueError) as e:
            raise SpinRSError(f"Failed to write report {name}: {str(e)}")
        logger.info(f"Wrote report {path}")
        return path

    def write_reports(self, reports: List[BaseModel], name: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        payload = [self.report_payload(r) for r in reports]
        try:
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        except (OSError, TypeError, ValueError) as e:
            raise SpinRSError(f"Failed to write reports {name}: {str(e)}")
        return path
