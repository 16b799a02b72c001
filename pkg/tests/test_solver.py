"""Variational solver: flat instances, residuals, config validation."""

import numpy as np
import pytest

from bernoulli_lab.errors import InvalidSpec, NegativeData
from bernoulli_lab.solver import (
    SolverConfig, residual_report, solve_bernoulli, solve_fbac,
)


@pytest.fixture(scope="module")
def flat_solution():
    field, report = solve_bernoulli(
        lambda p: np.maximum(p[:, 1] - 1.0, 0.0),
        (129, 129), 1.0 / 64, (0.0, 0.0))
    return field, report


def test_flat_free_boundary_position(flat_solution):
    field, _ = flat_solution
    col = field.values[64, :]
    fb = np.nonzero(col > field.positivity_tol())[0][0]
    y_fb = field.origin[1] + field.spacing * fb
    assert abs(y_fb - 1.0) < 0.05


def test_flat_residuals(flat_solution):
    field, _ = flat_solution
    rep = residual_report(field)
    assert rep["interior_max"] < 1e-6
    assert rep["fb_mean"] < 0.1


def test_report_has_stage_energies(flat_solution):
    _, report = flat_solution
    assert "stages" in report and len(report["stages"]) >= 1
    for s in report["stages"]:
        assert np.isfinite(s["energy_start"]) and np.isfinite(s["energy_end"])
    assert np.isfinite(report["final_energy"])


def test_allen_cahn_plateau():
    field, _ = solve_fbac(
        lambda p: np.clip(p[:, 1] - 1.0, -1.0, 1.0),
        (65, 97), 1.0 / 48, (0.0, 0.0))
    assert field.kind == "allen_cahn"
    assert np.all(field.values <= 1.0) and np.all(field.values >= -1.0)
    # the transition layer straddles y = 1 with unit slope
    mid = field.values[32, :]
    y = field.origin[1] + field.spacing * np.arange(field.shape[1])
    band = (np.abs(mid) < 0.5)
    slope = np.polyfit(y[band], mid[band], 1)[0]
    assert abs(slope - 1.0) < 0.05


def test_negative_data_rejected():
    with pytest.raises(NegativeData):
        solve_bernoulli(lambda p: p[:, 1] - 1.0,       # goes negative
                        (33, 33), 1.0 / 16, (0.0, 0.0))


def test_config_validation():
    with pytest.raises(InvalidSpec):
        SolverConfig(omega=2.5).validate(0.01)
    with pytest.raises(InvalidSpec):
        SolverConfig(eps_schedule=[0.1, 0.2]).validate(0.01)
    with pytest.raises(InvalidSpec):
        SolverConfig(eps_schedule=[0.1, 0.001]).validate(0.01)
