"""Stability functionals: eigenvalue algebra, quadratic forms, Modica."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernoulli_lab import stability as stab
from bernoulli_lab.errors import (
    InvalidSpec, NonSymmetric, OutOfDomain, OutOfRange,
)
from bernoulli_lab.exact import sample_harmonic_polynomial
from bernoulli_lab.field import Region


# -- the eigenvalue functional f -------------------------------------------------

def test_js_f_closed_form():
    M = np.diag([1.0, 1.0, -1.0])
    assert stab.js_f(M) == pytest.approx(math.sqrt(1 + 1 + 4))
    assert stab.js_f(np.zeros((3, 3))) == 0.0


def test_js_f_rejects_asymmetric():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NonSymmetric):
        stab.js_f(M)


sym3 = st.lists(st.floats(-5, 5), min_size=6, max_size=6)


@given(sym3, st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_js_f_positively_homogeneous(entries, t):
    a, b, c, d, e, f = entries
    M = np.array([[a, b, c], [b, d, e], [c, e, f]])
    assert stab.js_f(t * M) == pytest.approx(t * stab.js_f(M), rel=1e-9,
                                             abs=1e-12)


@given(sym3)
@settings(max_examples=40, deadline=None)
def test_js_f_batch_matches_scalar(entries):
    a, b, c, d, e, f = entries
    M = np.array([[a, b, c], [b, d, e], [c, e, f]])
    batch = stab.js_f_batch(M[None])[0]
    assert batch == pytest.approx(stab.js_f(M), rel=1e-9, abs=1e-12)


# -- boundary gap algebra --------------------------------------------------------

def test_boundary_gap_anchors():
    g1, _ = stab.js_boundary_gap(1.0)
    g0, _ = stab.js_boundary_gap(0.0)
    assert g1 == 0.0 and g0 == 1.0


@given(st.floats(-0.5, 1000.0))
@settings(max_examples=300, deadline=None)
def test_boundary_gap_dominates_bound(mu):
    g, bound = stab.js_boundary_gap(mu)
    assert g >= bound - 1e-12


def test_boundary_gap_domain():
    with pytest.raises(OutOfRange):
        stab.js_boundary_gap(-0.6)


def test_eigen_triple_ordering():
    with pytest.raises(InvalidSpec):
        stab.EigenTriple((0.0, 1.0, -1.0))
    t = stab.EigenTriple.from_mu_H(0.5, 2.0)
    assert t.lam[0] >= t.lam[1] >= t.lam[2]


# -- interior remainder ----------------------------------------------------------

@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_interior_inequality_on_harmonic_polys(seed):
    rng = np.random.default_rng(seed)
    spec = sample_harmonic_polynomial(3 + seed % 2, seed)
    pt = rng.uniform(-1, 1, size=3)
    res = stab.js_interior_exact(spec.poly, pt)
    for _ in range(5):
        if not res["degenerate"]:
            break
        pt = pt + rng.normal(scale=1e-3, size=3)
        res = stab.js_interior_exact(spec.poly, pt)
    assert res["lhs"] >= res["lower_bound"] - 1e-9
    assert res["lower_bound"] >= -1e-9


def test_interior_remainder_nonnegative_terms():
    triple = stab.EigenTriple((2.0, 1.0, -3.0))
    out = stab.js_interior_remainder(triple, [1.0, 1.0, 1.0])
    assert out["lower_bound"] >= 0.0
    assert not out["degenerate"]


# -- Modica and quadratic forms ---------------------------------------------------

def test_modica_exact_on_step(step_2d):
    assert abs(stab.modica_check(step_2d)["max"]) <= 1e-10


def test_modica_detects_violation(step_2d):
    from bernoulli_lab.field import ScalarField
    bad = ScalarField(np.clip(1.5 * step_2d.values, -1.0, 1.0),
                      step_2d.spacing, step_2d.origin, kind="allen_cahn")
    assert stab.modica_check(bad)["max"] > 0.5


def test_cutoff_gradient_consistency():
    cut = stab.CutoffSpec(kind="log", center=(0.0, 0.0), r_outer=1.0,
                          r_inner=0.25)
    pts = np.array([[0.5, 0.1], [0.0, 0.6], [0.3, 0.3]])
    eps = 1e-6
    g = cut.gradient(pts)
    for k, p in enumerate(pts):
        for a in range(2):
            step = np.zeros(2)
            step[a] = eps
            fd = (cut.values((p + step)[None])[0]
                  - cut.values((p - step)[None])[0]) / (2 * eps)
            assert abs(fd - g[k, a]) < 1e-5


def test_cutoff_validation():
    with pytest.raises(InvalidSpec):
        stab.CutoffSpec(kind="bad", center=(0, 0), r_outer=1.0)
    with pytest.raises(InvalidSpec):
        stab.CutoffSpec(kind="log", center=(0, 0), r_outer=1.0, r_inner=2.0)


def test_sz_lhs_zero_on_flat_solutions(vee_2d, half_plane_2d):
    cut = stab.CutoffSpec(kind="tent", center=(1.0, 1.0), r_outer=0.5)
    for field in (vee_2d, half_plane_2d):
        lhs, rhs = stab.sz_quadratic_form(field, cut)
        assert lhs == 0.0 and rhs > 0.0


def test_sz_cutoff_must_fit(vee_2d):
    cut = stab.CutoffSpec(kind="tent", center=(1.0, 1.0), r_outer=5.0)
    with pytest.raises(OutOfDomain):
        stab.sz_quadratic_form(vee_2d, cut)


def test_sz_ac_form_on_step(step_2d):
    cut = stab.CutoffSpec(kind="tent", center=(1.0, 1.0), r_outer=0.5)
    lhs, rhs = stab.sz_ac_quadratic_form(step_2d, cut)
    assert lhs <= rhs                       # flat layer: zero curvature


# -- the functional and its scaling ----------------------------------------------

def test_js_functional_zero_on_flat(vee_2d, half_plane_2d):
    reg = Region.ball(np.array([1.0, 1.0]), 0.5)
    for field in (vee_2d, half_plane_2d):
        out = stab.js_functional(field, reg)
        assert out["value"] == 0.0


def test_js_functional_positive_on_neck(neck_3d):
    reg = Region.ball(np.array([1.0, 1.0, 1.0]), 0.75)
    out = stab.js_functional(neck_3d, reg)
    assert out["value"] > 0.0


def test_rho_scaling_under_grid_rescale(neck_3d):
    """i(u, B_R(z)) = r^{1/3} i(u_{z,r}, B_{R/r}(0)) under exact rescale."""
    from bernoulli_lab.field import ScalarField
    z = np.array([1.0, 1.0, 1.0])
    r = 0.5
    rescaled = ScalarField(neck_3d.values / r, neck_3d.spacing / r,
                           (neck_3d.origin - z) / r, kind="bernoulli")
    big = stab.js_functional(neck_3d, Region.ball(z, 0.5))["value"]
    small = stab.js_functional(rescaled,
                               Region.ball(np.zeros(3), 0.5 / r))["value"]
    assert big == pytest.approx(r ** (1.0 / 3.0) * small, rel=1e-9)
