"""Level-set extraction and surface quadrature."""

import math

import numpy as np
import pytest

from bernoulli_lab.errors import EmptyLevelSet
from bernoulli_lab.field import ScalarField
from bernoulli_lab.mesh import (
    extract_free_boundary, extract_level_set, surface_integrate,
)


def sphere_field(n=49, R=0.8):
    h = 2.4 / (n - 1)
    return ScalarField.from_function(
        lambda p: np.linalg.norm(p - 1.2, axis=1) - R,
        (n, n, n), h, (0.0, 0.0, 0.0), kind="generic"), R


def test_sphere_area_and_curvature():
    field, R = sphere_field()
    mesh = extract_level_set(field, 0.0)
    assert mesh.is_manifold()
    area = mesh.total_measure()
    assert abs(area - 4.0 * math.pi * R * R) / (4.0 * math.pi * R * R) < 0.01
    # summed principal curvatures of a sphere of radius R: 2/R
    med = float(np.median(np.abs(mesh.mean_curvature)))
    assert abs(med - 2.0 / R) / (2.0 / R) < 0.1


def test_surface_integral_weights_sum_to_area():
    field, R = sphere_field()
    mesh = extract_level_set(field, 0.0)
    total = surface_integrate(mesh, np.ones(len(mesh.vertices)))
    assert total == pytest.approx(mesh.total_measure(), rel=1e-12)


def test_circle_length_2d():
    h = 2.4 / 96
    field = ScalarField.from_function(
        lambda p: np.linalg.norm(p - 1.2, axis=1) - 0.8,
        (97, 97), h, (0.0, 0.0), kind="generic")
    mesh = extract_level_set(field, 0.0)
    assert abs(mesh.total_measure() - 2.0 * math.pi * 0.8) < 0.01


def test_free_boundary_of_half_plane(half_plane_2d):
    mesh = extract_free_boundary(half_plane_2d)
    assert np.all(np.abs(mesh.vertices[:, 1] - 1.0) < 2 * half_plane_2d.spacing)
    assert np.allclose(np.abs(mesh.normals[:, 1]), 1.0, atol=1e-6)


def test_empty_level_set_raises():
    field, _ = sphere_field(n=25)
    with pytest.raises(EmptyLevelSet):
        extract_level_set(field, 10.0)
