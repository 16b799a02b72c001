"""End-to-end command-line runs against exact and solved instances."""

import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from bernoulli_lab import fileio
from bernoulli_lab.cli import main

VEE_CONFIG = {
    "version": 1,
    "field": {"exact": {"kind": "vee", "e": [0.0, 1.0], "y": [1.0, 1.0],
                        "shape": [257, 257], "h": 1.0 / 128,
                        "origin": [0.0, 0.0]}},
    "diagnose": {"center": [1.0, 1.0], "radii": [0.2, 0.3, 0.4],
                 "quantities": ["W", "dW_rhs"]},
    "excess": {"center": [1.0, 1.0], "radii": [0.2, 0.4]},
}


@pytest.fixture()
def runner():
    return CliRunner()


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_diagnose_vee_weiss_constant(tmp_path, runner):
    cfg = write_config(tmp_path, VEE_CONFIG)
    out = tmp_path / "out"
    res = runner.invoke(main, ["diagnose", "--config", cfg, "--out",
                               str(out)])
    assert res.exit_code == 0, res.output
    header, rows = fileio.read_csv(out / "diagnose.csv")
    w = [row[header.index("W")] for row in rows]
    for val in w:
        assert abs(val - math.pi) / math.pi < 0.01
    _, checks = fileio.read_csv(out / "diagnose_checks.csv")
    assert all(row[-1] == 1.0 for row in checks)


def test_diagnose_is_deterministic(tmp_path, runner):
    cfg = write_config(tmp_path, VEE_CONFIG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        res = runner.invoke(main, ["diagnose", "--config", cfg, "--out",
                                   str(out)])
        assert res.exit_code == 0
        outs.append((out / "diagnose.csv").read_bytes())
    assert outs[0] == outs[1]


def test_solve_writes_field_and_report(tmp_path, runner):
    cfg = write_config(tmp_path, {
        "version": 1,
        "field": {"solver": {
            "problem": "bernoulli",
            "data": {"kind": "affine_plus", "e": [0.0, 1.0], "b": 1.0},
            "shape": [65, 65], "h": 1.0 / 32, "origin": [0.0, 0.0]}}})
    out = tmp_path / "out"
    res = runner.invoke(main, ["solve", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0, res.output
    field = fileio.read_field(out / "field.fbf", kind="bernoulli")
    assert field.shape == (65, 65)
    report = json.loads((out / "solve_report.json").read_text())
    assert report["converged"]
    assert report["residuals"]["interior_max"] < 1e-6


def test_excess_sweep_csv(tmp_path, runner):
    cfg = write_config(tmp_path, VEE_CONFIG)
    out = tmp_path / "out"
    res = runner.invoke(main, ["excess", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0, res.output
    header, rows = fileio.read_csv(out / "excess_sweep.csv")
    assert header == ["radius", "E", "A", "rho", "N", "max_rstar"]
    for row in rows:
        assert row[header.index("E")] <= 2.0 / 128 / row[0]


def test_necks_and_tree(tmp_path, runner, neck_3d):
    field_path = tmp_path / "neck.fbf"
    fileio.write_field(field_path, neck_3d)
    cfg = write_config(tmp_path, {
        "version": 1,
        "field": {"file": str(field_path), "kind": "bernoulli"},
        "necks": {"tree_center": [1.0, 1.0, 1.0], "tree_radius": 0.8,
                  "M": 4.0}})
    out = tmp_path / "out"
    res = runner.invoke(main, ["necks", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0, res.output
    header, rows = fileio.read_csv(out / "neck_centers.csv")
    assert header[:3] == ["x0", "x1", "x2"] and rows
    tree = json.loads((out / "ball_tree.json").read_text())
    assert tree["invariants"]["child_count_violations"] == 0
    assert tree["tree"]["kind"] in ("branching", "regular_terminal",
                                    "neck_terminal")


def test_surface_mesh_export(tmp_path, runner, neck_3d):
    field_path = tmp_path / "neck.fbf"
    fileio.write_field(field_path, neck_3d)
    cfg = write_config(tmp_path, {
        "version": 1,
        "field": {"file": str(field_path), "kind": "bernoulli"},
        "surface": {"level": 0.05, "seed_point": [1.0, 1.0, 1.5]}})
    out = tmp_path / "out"
    res = runner.invoke(main, ["surface", "--config", cfg, "--out",
                               str(out)])
    assert res.exit_code == 0, res.output
    mesh = fileio.read_mesh(out / "surface.off")
    assert len(mesh["vertices"]) > 0
    assert {"mean_curvature", "distance", "gauss_curvature"} \
        <= set(mesh["scalars"])
    report = json.loads((out / "surface_report.json").read_text())
    assert report["lipschitz_ok"]


def test_missing_config_exits_2(tmp_path, runner):
    res = runner.invoke(main, ["diagnose", "--config",
                               str(tmp_path / "missing.json")])
    assert res.exit_code == 2
    assert "missing.json" in res.output


def test_config_without_version_exits_2(tmp_path, runner):
    cfg = write_config(tmp_path, {"seed": 1})
    res = runner.invoke(main, ["diagnose", "--config", cfg])
    assert res.exit_code == 2
    assert "version" in res.output


def test_missing_field_file_exits_2(tmp_path, runner):
    cfg = write_config(tmp_path, {
        "version": 1,
        "field": {"file": str(tmp_path / "ghost.fbf")},
        "diagnose": {"center": [1.0, 1.0], "radii": [0.2, 0.3]}})
    res = runner.invoke(main, ["diagnose", "--config", cfg])
    assert res.exit_code == 2
    assert "ghost.fbf" in res.output
