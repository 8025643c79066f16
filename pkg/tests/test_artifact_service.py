"""Tests for trajectory tables and JSON reports."""

import json

import numpy as np
import pandas as pd

from models import PropertyResult, Trajectory, VerifyReport
from services.artifact_service import ArtifactService, round_significant


def make_trajectory():
    times = np.array([0.0, 0.5])
    q = np.array([[0.1, 1.2], [0.2, 1.1]])
    v = np.ones((2, 1, 2), dtype=complex) * (1.0 + 0.5j)
    observables = {
        "trL_1": np.array([3.0, 3.0]),
        "trL_2": np.array([5.0, 5.0]),
        "constraint_residual": np.array([0.0, 1e-15]),
        "gauge_violation": np.array([0.0, 0.0]),
        "qdot_sum": np.array([1.0, 1.0]),
    }
    return Trajectory(times=times, q=q, v=v, gamma=0.5, observables=observables)


def test_round_significant():
    assert round_significant({"a": [0.123456, 2.0], "b": 1234.5, "c": "x", "d": 0.0}) == \
        {"a": [0.123, 2.0], "b": 1230.0, "c": "x", "d": 0.0}


def test_trajectory_frame_columns():
    frame = ArtifactService.trajectory_frame(make_trajectory())
    assert list(frame.columns) == ["t", "q_1", "q_2", "Re_v1_1", "Re_v1_2", "Im_v1_1", "Im_v1_2",
                                   "trL_1", "trL_2", "constraint_residual", "gauge_violation", "qdot_sum"]
    assert frame["Im_v1_2"].tolist() == [0.5, 0.5]


def test_write_trajectory_round_trips(tmp_path):
    path = ArtifactService(str(tmp_path / "run")).write_trajectory(make_trajectory())
    frame = pd.read_csv(path)
    assert frame["q_1"].tolist() == [0.1, 0.2]
    assert frame["constraint_residual"].tolist() == [0.0, 1e-15]


def test_nothing_written_without_directory():
    artifacts = ArtifactService()
    assert artifacts.write_trajectory(make_trajectory()) is None
    assert artifacts.write_report(VerifyReport(suite="lax", seed=0, samples=0), "x.json") is None


def test_report_payload(tmp_path):
    report = VerifyReport(suite="lax", seed=3, samples=2, properties=[
        PropertyResult(name="r_matrix", max_violation=1.23456e-11, threshold=1e-9, passed=True)])
    path = ArtifactService(str(tmp_path)).write_report(report, "verify_lax.json", {"note": "x"})
    payload = json.loads(path.read_text())
    assert payload["raw"]["properties"][0]["max_violation"] == 1.23456e-11
    assert payload["rounded"]["properties"][0]["max_violation"] == 1.23e-11
    assert payload["raw"]["note"] == "x"


def test_write_reports_lists_payloads(tmp_path):
    reports = [VerifyReport(suite="lax", seed=0, samples=0), VerifyReport(suite="limits", seed=0, samples=0)]
    path = ArtifactService(str(tmp_path)).write_reports(reports, "verify_all.json")
    payload = json.loads(path.read_text())
    assert [p["raw"]["suite"] for p in payload] == ["lax", "limits"]
