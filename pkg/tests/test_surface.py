"""Region partitions, normal flow, intrinsic distance, area/curvature checks."""

import math

import numpy as np
import pytest

from bernoulli_lab.errors import (
    BandTouchesBoundary, DomainTooSmall, EmptySeed, GradientDegenerate,
    InvalidSpec,
)
from bernoulli_lab.field import ScalarField
from bernoulli_lab.mesh import extract_level_set
from bernoulli_lab.surface import (
    area_profile, classify_regions, find_clean_annulus, gauss_bonnet_check,
    gauss_curvature, intrinsic_distance, normal_flow_projection,
)

CENTER = np.array([1.2, 1.2])


@pytest.fixture(scope="module")
def curved_ac():
    """Clamped radial profile: a narrow circular transition layer."""
    def profile(p):
        r = np.linalg.norm(p - CENTER, axis=1)
        return np.clip((r - 0.9) / 0.1, -1.0, 1.0)
    return ScalarField.from_function(profile, (129, 129), 2.4 / 128,
                                     (0.0, 0.0), kind="allen_cahn")


@pytest.fixture(scope="module")
def sphere_df():
    """Geodesic distance from the north pole of a unit sphere mesh."""
    h = 2.6 / 64
    f = ScalarField.from_function(
        lambda p: np.linalg.norm(p - 1.3, axis=1) - 1.0,
        (65, 65, 65), h, (0.0, 0.0, 0.0), kind="generic")
    mesh = extract_level_set(f, 0.0)
    north = np.array([1.3, 1.3, 2.3])
    d = np.linalg.norm(mesh.vertices - north, axis=1)
    return intrinsic_distance(mesh, d <= d.min() + 1e-12), mesh, h


@pytest.fixture(scope="module")
def planar_df():
    """Distance from a disk seed on a flat extracted plane."""
    h = 4.0 / 128
    f = ScalarField.from_function(
        lambda p: p[:, 2].copy(), (129, 129, 11), h, (-2.0, -2.0, -5 * h),
        kind="generic")
    mesh = extract_level_set(f, 0.0)
    seed = np.linalg.norm(mesh.vertices[:, :2], axis=1) <= 0.3
    return intrinsic_distance(mesh, seed)


# -- region partition --------------------------------------------------------------

def test_flat_layer_has_no_concentration(step_2d):
    part = classify_regions(step_2d, 1e-8, probe_radius=0.25, cutoff=0.25)
    assert int(part.x_set.sum()) == 0
    assert part.check()


def test_curved_layer_concentrates(curved_ac):
    part = classify_regions(curved_ac, 1e-6, probe_radius=0.15, cutoff=0.3)
    assert int(part.x_set.sum()) > 0
    assert part.check()
    # a huge threshold empties the concentration set again
    loose = classify_regions(curved_ac, 50.0, probe_radius=0.15, cutoff=0.3)
    assert int(loose.x_set.sum()) == 0


def test_classify_validation(step_2d, curved_ac):
    with pytest.raises(InvalidSpec):
        classify_regions(curved_ac, 0.0, probe_radius=0.15)
    with pytest.raises(DomainTooSmall):
        classify_regions(curved_ac, 1e-3, probe_radius=5.0)
    plain = ScalarField(step_2d.values, step_2d.spacing, step_2d.origin,
                        kind="generic")
    with pytest.raises(InvalidSpec):
        classify_regions(plain, 1e-3, probe_radius=0.25)


def test_clean_annulus_reports(step_2d, curved_ac):
    from bernoulli_lab.surface import RegionPartition

    empty = classify_regions(step_2d, 1.0, probe_radius=0.25, cutoff=0.25)
    assert find_clean_annulus(empty, 0.1)["reason"] == "no bad set"
    # an isolated concentration cell admits a clean annulus right away
    x = np.zeros((65, 65), dtype=bool)
    x[32, 32] = True
    lone = RegionPartition(x_set=x, g_set=np.zeros_like(x),
                           w_set=np.zeros_like(x), delta=1.0,
                           probe_radius=0.1, cutoff=0.2, spacing=1.0 / 32,
                           origin=np.zeros(2))
    rec = find_clean_annulus(lone, 0.1)
    assert rec["reason"] is None and rec["radius"] > 0
    # a full transition ring never clears a band of every other bad cell
    part = classify_regions(curved_ac, 1e-6, probe_radius=0.15, cutoff=0.3)
    assert find_clean_annulus(part, 0.05)["reason"] == "domain exhausted"
    with pytest.raises(InvalidSpec):
        find_clean_annulus(part, 0.0)


# -- normal flow --------------------------------------------------------------------

def test_normal_flow_linear_exact():
    lin = ScalarField.from_function(lambda p: p[:, 1].copy(), (65, 65),
                                    1.0 / 32, (0.0, 0.0), kind="generic")
    p = normal_flow_projection(lin, np.array([0.7, 0.3]), 0.9)
    assert np.linalg.norm(p - [0.7, 0.9]) < 1e-6


def test_normal_flow_cone_is_radial():
    def cone(p):
        return np.linalg.norm(p - CENTER, axis=1) - 0.4
    f = ScalarField.from_function(cone, (129, 129), 2.4 / 128, (0.0, 0.0),
                                  kind="generic")
    x0 = CENTER + 0.5 * np.array([math.cos(0.7), math.sin(0.7)])
    p = normal_flow_projection(f, x0, 0.1)
    assert abs(cone(p[None])[0] - 0.1) < 1e-3
    a, b = p - CENTER, x0 - CENTER
    assert abs(a[0] * b[1] - a[1] * b[0]) < 1e-4


def test_normal_flow_degenerate_gradient():
    def bump(p):
        return np.exp(-np.sum((p - CENTER) ** 2, axis=1))
    f = ScalarField.from_function(bump, (129, 129), 2.4 / 128, (0.0, 0.0),
                                  kind="generic")
    with pytest.raises(GradientDegenerate):
        normal_flow_projection(f, CENTER + 0.01, 0.1)


# -- intrinsic distance and zonal areas ---------------------------------------------

def test_sphere_geodesic_matches_arc(sphere_df):
    df, mesh, h = sphere_df
    north = np.array([1.3, 1.3, 2.3])
    chord = np.linalg.norm(mesh.vertices - north, axis=1)
    exact = 2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))
    assert float(np.max(np.abs(df.distance - exact))) < 3.0 * h
    assert df.check_lipschitz()


def test_sphere_zonal_areas(sphere_df):
    df, _, _ = sphere_df
    prof = area_profile(df, [0.4, 0.8, 1.6])
    for (d1, d2), got in zip([(0.4, 0.8), (0.8, 1.6)], prof["areas"]):
        exact = 2.0 * math.pi * (math.cos(d1) - math.cos(d2))
        assert abs(got - exact) / exact < 0.02


def test_empty_seed_raises(sphere_df):
    _, mesh, _ = sphere_df
    with pytest.raises(EmptySeed):
        intrinsic_distance(mesh, np.zeros(len(mesh.vertices), dtype=bool))


def test_planar_disk_bins_and_doubling(planar_df):
    prof = area_profile(planar_df, [0.2, 0.4, 0.6, 0.8])
    for (r1, r2), got in zip([(0.2, 0.4), (0.4, 0.6), (0.6, 0.8)],
                             prof["areas"]):
        exact = math.pi * ((0.3 + r2) ** 2 - (0.3 + r1) ** 2)
        assert abs(got - exact) / exact < 0.03
    assert prof["doubling_flags"].all()


def test_area_profile_validation(planar_df):
    with pytest.raises(InvalidSpec):
        area_profile(planar_df, [0.2])
    with pytest.raises(InvalidSpec):
        area_profile(planar_df, [0.2, 0.4], p=0)
    with pytest.raises(InvalidSpec):
        area_profile(planar_df, [0.2, 0.4], big_lambda=32.0)


# -- discrete curvature -------------------------------------------------------------

def test_sphere_total_defect(sphere_df):
    _, mesh, _ = sphere_df
    out = gauss_curvature(mesh)
    assert abs(out["total_defect"] - 4.0 * math.pi) / (4.0 * math.pi) < 0.01


def test_gauss_bonnet_on_flat_disk(planar_df):
    gb = gauss_bonnet_check(planar_df, 0.2, 0.6)
    assert gb["slack"] >= -0.05 * abs(gb["lhs"])
    with pytest.raises(InvalidSpec):
        gauss_bonnet_check(planar_df, 0.3, 0.5)       # needs r2 > 2 r1
    with pytest.raises(BandTouchesBoundary):
        gauss_bonnet_check(planar_df, 0.2, 5.0)
