"""Acceptance gate: the full verification suite, run once through the CLI.

Each test below covers one suite criterion, asserts its recorded result, and
prints a single pass/fail line.  The suite itself (instances, oracles, and
tolerances) lives in bernoulli_lab.verify; this file only checks its verdicts
so that the gate and the `verify` subcommand can never disagree.
"""

import json
import subprocess
import sys
import time

import pytest


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify")
    t0 = time.monotonic()
    proc = subprocess.run(
        [sys.executable, "-m", "bernoulli_lab.cli", "verify",
         "--out", str(out)],
        capture_output=True, text=True)
    elapsed = time.monotonic() - t0
    report_path = out / "verify.json"
    assert report_path.exists(), proc.stderr
    report = json.loads(report_path.read_text())
    return report, proc, elapsed


def _criterion(suite, num):
    report, _, _ = suite
    rec = next(r for r in report["records"] if r["criterion"] == num)
    status = "PASS" if rec["passed"] else "FAIL"
    print(f"criterion {num:>2} {rec['name']:<24} {status} "
          f"({rec['seconds']:.1f}s, tolerance {rec['tolerance_key']})")
    return rec


def test_criterion_01_weiss_constants(suite):
    rec = _criterion(suite, 1)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["worst_rel_err"] < 0.01
    cases = {row["case"] for row in rec["measured"]["rows"]}
    assert {"half_plane_2d", "vee_2d", "half_plane_3d", "vee_3d"} <= cases
    assert rec["seconds"] < 10.0


def test_criterion_02_weiss_monotonicity(suite):
    rec = _criterion(suite, 2)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["decrease_violations"] == 0
    assert rec["measured"]["worst_derivative_rel"] < 0.05
    assert rec["seconds"] < 60.0


def test_criterion_03_tm_identity(suite):
    rec = _criterion(suite, 3)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["worst_residual"] <= 0.02


def test_criterion_04_monneau_inequalities(suite):
    rec = _criterion(suite, 4)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["worst_slack"] >= -0.05


def test_criterion_05_interior_inequality(suite):
    rec = _criterion(suite, 5)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["total"] == 1000
    assert rec["measured"]["holds"] == rec["measured"]["total"]
    assert rec["seconds"] < 30.0


def test_criterion_06_boundary_gap(suite):
    rec = _criterion(suite, 6)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["worst_gap_minus_bound"] >= 0.0
    assert rec["measured"]["g_at_1"] == 0.0
    assert rec["measured"]["g_at_0"] == 1.0


def test_criterion_07_quadratic_form(suite):
    rec = _criterion(suite, 7)
    assert rec["passed"], rec["measured"]
    for row in rec["measured"]["rows"]:
        assert row["slack_rel"] >= -0.02
        if row["case"] != "solved":            # exact cones: lhs vanishes
            assert row["lhs"] == 0.0


def test_criterion_08_modica_bound(suite):
    rec = _criterion(suite, 8)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["solved_max"] <= 0.05
    assert abs(rec["measured"]["step_max"]) <= 1e-10


def test_criterion_09_neck_detection(suite):
    rec = _criterion(suite, 9)
    assert rec["passed"], rec["measured"]
    for row in rec["measured"]["rows"]:
        assert 0.5 <= row["ratio"] <= 2.0
        assert row["center_hit"]
    assert rec["seconds"] < 300.0


def test_criterion_10_ball_tree(suite):
    rec = _criterion(suite, 10)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["total_violations"] == 0
    for row in rec["measured"]["rows"]:
        assert row["child_count_violations"] == 0
        assert row["coverage_violations"] == 0
        assert row["polarity_violations"] == 0


def test_criterion_11_excess(suite):
    rec = _criterion(suite, 11)
    assert rec["passed"], rec["measured"]
    # the synthetic uniform noise amplitude in the suite is 0.02
    assert 0.3 * 0.02 <= rec["measured"]["noise_residual"] <= 0.7 * 0.02
    for margin in rec["measured"]["oracle_margins"]:
        assert margin <= 1e-6


def test_criterion_12_intrinsic_geometry(suite):
    rec = _criterion(suite, 12)
    assert rec["passed"], rec["measured"]
    assert rec["measured"]["defect_rel"] < 0.01
    assert rec["measured"]["geodesic_max_err"] \
        <= rec["measured"]["geodesic_bound"]


def test_criterion_13_suite_verdict(suite):
    rec = _criterion(suite, 13)
    report, proc, elapsed = suite
    assert rec["passed"]
    assert proc.returncode == 0, proc.stderr
    assert report["passed"]
    assert rec["measured"]["checks_passed"] == rec["measured"]["checks_total"]
    assert report["seconds_2d"] < 300.0
    assert report["seconds_total"] < 900.0
    assert elapsed < 900.0 + 300.0      # 2D and 3D budgets, end to end
