"""Grid container, interpolation, derivative stencils, and quadrature."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernoulli_lab.errors import InvalidSpec, OutOfDomain
from bernoulli_lab.field import (
    Region, ScalarField, ball_volume, integrate_region, integrate_sphere,
    sphere_lattice,
)


def make_field(fn, n=65, h=1.0 / 32, kind="generic"):
    return ScalarField.from_function(fn, (n, n), h, (0.0, 0.0), kind=kind)


def test_geometry_basics():
    f = make_field(lambda p: p[:, 0])
    assert f.dimension == 2
    assert f.shape == (65, 65)
    assert np.allclose(f.upper, [2.0, 2.0])
    assert len(f.axes()) == 2
    assert f.node_coords().shape == (65, 65, 2)


def test_constructor_validation():
    with pytest.raises(InvalidSpec):
        ScalarField(np.zeros(10), 0.1, (0.0,))          # 1D not supported
    with pytest.raises(InvalidSpec):
        ScalarField(np.zeros((3, 8)), 0.1, (0.0, 0.0))  # axis too short
    bad = np.zeros((8, 8))
    bad[2, 2] = np.nan
    with pytest.raises(InvalidSpec):
        ScalarField(bad, 0.1, (0.0, 0.0))


def test_interp_exact_on_linear():
    f = make_field(lambda p: 2.0 * p[:, 0] - 3.0 * p[:, 1] + 0.5)
    pts = np.array([[0.3, 0.7], [1.234, 0.001], [1.99, 1.99]])
    expect = 2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.5
    assert np.allclose(f.interp(pts), expect, atol=1e-12)


def test_interp_out_of_domain_vs_clamp():
    f = make_field(lambda p: p[:, 0])
    with pytest.raises(OutOfDomain):
        f.interp(np.array([[2.5, 1.0]]))
    assert np.isfinite(f.interp(np.array([[2.5, 1.0]]), clamp=True)[0])


def test_derivatives_exact_on_quadratic():
    f = make_field(lambda p: p[:, 0] ** 2 + 3.0 * p[:, 0] * p[:, 1])
    p = np.array([1.0, 1.0])
    g = f.gradient_at(p)
    assert np.allclose(g, [2.0 * p[0] + 3.0 * p[1], 3.0 * p[0]], atol=1e-9)
    H = f.hessian_at(p)
    assert np.allclose(H, [[2.0, 3.0], [3.0, 0.0]], atol=1e-8)


def test_gradient_at_respects_margin():
    f = make_field(lambda p: p[:, 0])
    with pytest.raises(OutOfDomain):
        f.gradient_at(np.array([0.01, 1.0]))


def test_live_mask_kinds(half_plane_2d, step_2d):
    live_b = half_plane_2d.live_mask()
    assert live_b.sum() < live_b.size            # dead phase excluded
    assert np.all(half_plane_2d.values[live_b] > 0)
    live_ac = step_2d.live_mask()
    assert np.all(np.abs(step_2d.values[live_ac]) < 1.0)


def test_ball_quadrature_matches_area():
    f = make_field(lambda p: np.ones(len(p)))
    for r in (0.3, 0.7):
        got = integrate_region(f, f.values * 0 + 1.0,
                               Region.ball(np.array([1.0, 1.0]), r))
        assert abs(got - math.pi * r * r) < 2e-3


def test_positive_phase_restriction(half_plane_2d):
    r = 0.5
    got = integrate_region(half_plane_2d, np.ones(half_plane_2d.shape),
                           Region.ball(np.array([1.0, 1.0]), r),
                           restrict="positive")
    assert abs(got - 0.5 * math.pi * r * r) < 5e-3


def test_sphere_quadrature_matches_circumference():
    f = make_field(lambda p: np.ones(len(p)))
    r = 0.6
    got = integrate_sphere(f, lambda p: np.ones(len(p)),
                           np.array([1.0, 1.0]), r)
    assert abs(got - 2.0 * math.pi * r) < 1e-6


def test_region_signed_ball_sign():
    reg = Region.ball(np.array([1.0, 1.0]), 0.5)
    s = reg.signed(np.array([[1.0, 1.0], [1.0, 1.6], [1.0, 1.5]]))
    assert s[0] > 0 and s[1] < 0 and abs(s[2]) < 1e-12


@given(st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=2))
@settings(max_examples=25, deadline=None)
def test_region_annulus_consistent_with_balls(xy):
    p = np.array([xy])
    ann = Region.annulus(np.zeros(2), 0.3, 0.8)
    d = float(np.linalg.norm(p))
    inside = 0.3 < d < 0.8
    assert (ann.signed(p)[0] > 0) == inside or abs(ann.signed(p)[0]) < 1e-12


def test_sphere_lattice_unit_norm():
    for dim, m in ((2, 64), (3, 256)):
        pts = sphere_lattice(dim, m)
        assert pts.shape == (m, dim)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_ball_volume_closed_forms():
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4.0 / 3.0 * math.pi * 8.0)
