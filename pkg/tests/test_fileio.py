"""Round trips and determinism for the field/mesh/CSV/config formats."""

import json

import numpy as np
import pytest

from bernoulli_lab import fileio
from bernoulli_lab.errors import ConfigError
from bernoulli_lab.field import ScalarField
from bernoulli_lab.mesh import extract_level_set


@pytest.fixture()
def small_field():
    rng = np.random.default_rng(11)
    return ScalarField(rng.normal(size=(9, 7)), 1.0 / 8, (0.25, -1.0),
                       kind="generic")


def test_field_round_trip(tmp_path, small_field):
    path = tmp_path / "u.fbf"
    fileio.write_field(path, small_field)
    back = fileio.read_field(path, kind="generic")
    assert back.shape == small_field.shape
    assert back.spacing == small_field.spacing
    assert np.array_equal(back.origin, small_field.origin)
    assert np.array_equal(back.values, small_field.values)


def test_field_write_is_deterministic(tmp_path, small_field):
    p1, p2 = tmp_path / "a.fbf", tmp_path / "b.fbf"
    fileio.write_field(p1, small_field)
    fileio.write_field(p2, small_field)
    assert p1.read_bytes() == p2.read_bytes()


def test_field_bad_header(tmp_path):
    path = tmp_path / "bad.fbf"
    path.write_bytes(b"FBF9 dim=2 shape=2,2 h=1 origin=0,0\n" + b"\x00" * 32)
    with pytest.raises(ConfigError):
        fileio.read_field(path)
    path.write_bytes(b"FBF1 dim=2 shape=3,3 h=0.5 origin=0,0\n" + b"\x00" * 8)
    with pytest.raises(ConfigError):
        fileio.read_field(path)            # payload shorter than the shape


def test_mesh_round_trip_with_scalars(tmp_path):
    f = ScalarField.from_function(
        lambda p: np.linalg.norm(p - 1.0, axis=1) - 0.6,
        (33, 33, 33), 2.0 / 32, (0.0, 0.0, 0.0), kind="generic")
    mesh = extract_level_set(f, 0.0)
    path = tmp_path / "surface.off"
    fileio.write_mesh(path, mesh, vertex_scalars={"H": mesh.mean_curvature})
    back = fileio.read_mesh(path)
    assert np.allclose(back["vertices"], mesh.vertices)
    assert np.array_equal(back["elements"], mesh.elements)
    assert np.allclose(back["scalars"]["H"], mesh.mean_curvature)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    rows = [[0.1, "a,b", 3], [float(np.pi), "plain", -1]]
    fileio.write_csv(path, ["x", "label", "n"], rows)
    raw = path.read_bytes()
    assert b"\r\n" in raw and b'"a,b"' in raw
    header, data = fileio.read_csv(path)
    assert header == ["x", "label", "n"]
    assert data[1][0] == float(np.pi)      # ".17g" keeps doubles exact


def test_config_requires_version(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"version": 1, "seed": 3}))
    assert fileio.load_config(path)["seed"] == 3
    path.write_text(json.dumps({"seed": 3}))
    with pytest.raises(ConfigError):
        fileio.load_config(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        fileio.load_config(path)


def test_config_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError) as err:
        fileio.load_config(missing)
    assert "nope.json" in str(err.value)


def test_dump_json_sorted_and_numpy_safe(tmp_path):
    path = tmp_path / "out.json"
    fileio.dump_json(path, {"b": np.float64(1.5), "a": np.arange(3)})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5}
