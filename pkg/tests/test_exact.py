"""Closed-form fields: harmonicity, zero sets, and spec round-trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernoulli_lab.errors import InvalidSpec
from bernoulli_lab.exact import (
    ExactSpec, evaluate, harmonic_basis, realize, sample_harmonic_polynomial,
)


def test_harmonic_basis_laplacian_exactly_zero():
    for degree in (2, 3, 4):
        basis = harmonic_basis(degree)
        assert len(basis) == 2 * degree + 1      # spherical harmonics count
        for poly in basis:
            assert poly.laplacian().coeffs == {}


@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([3, 4]))
@settings(max_examples=20, deadline=None)
def test_sampled_polynomial_is_harmonic(seed, degree):
    spec = sample_harmonic_polynomial(degree, seed)
    lap = spec.poly.laplacian()
    pts = np.random.default_rng(seed).uniform(-2, 2, size=(16, 3))
    assert np.all(lap(pts) == 0.0)


def test_poly_derivatives_consistent():
    spec = sample_harmonic_polynomial(3, 7)
    p = np.array([0.4, -0.2, 0.9])
    eps = 1e-6
    g = spec.poly.gradient(p)
    for a in range(3):
        step = np.zeros(3)
        step[a] = eps
        fd = (spec.poly(p + step)[0] - spec.poly(p - step)[0]) / (2 * eps)
        assert abs(fd - g[a]) < 1e-6 * max(1.0, abs(g[a]))


def test_half_plane_and_vee_values():
    e = np.array([0.0, 1.0])
    hp = ExactSpec(kind="half_plane", e=e, b=1.0)
    v = ExactSpec(kind="vee", e=e, y=np.array([0.0, 1.0]))
    pts = np.array([[0.3, 1.7], [0.3, 0.2]])
    assert np.allclose(evaluate(hp, pts), [0.7, 0.0])
    assert np.allclose(evaluate(v, pts), [0.7, 0.8])


def test_one_d_step_clamps():
    spec = ExactSpec(kind="one_d_step", e=np.array([0.0, 1.0]), b=1.0)
    pts = np.array([[0.0, 5.0], [0.0, -5.0], [0.0, 1.25]])
    assert np.allclose(evaluate(spec, pts), [1.0, -1.0, 0.25])


class TestSyntheticNeck:
    W = 0.25
    SPEC = None

    @classmethod
    def setup_class(cls):
        cls.SPEC = ExactSpec(kind="synthetic_neck",
                             e=np.array([0.0, 0.0, 1.0]),
                             y=np.array([0.0, 0.0, 0.0]), r_neck=cls.W)

    def test_zero_exactly_on_plane_outside_waist(self):
        rho = np.linspace(self.W, 2.0, 13)
        pts = np.stack([rho, np.zeros(13), np.zeros(13)], axis=1)
        assert np.all(evaluate(self.SPEC, pts) == 0.0)

    def test_positive_on_bridge_and_off_plane(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0],
                        [0.5, 0.5, 0.3], [0.0, 0.0, -0.4]])
        assert np.all(evaluate(self.SPEC, pts) > 0.0)

    def test_asymptotic_to_vee(self):
        # far from the waist the field approaches |z| plus O(w) correction
        z = 3.0
        val = evaluate(self.SPEC, np.array([[0.0, 0.0, z]]))[0]
        assert abs(val - z) < self.W

    def test_harmonic_where_positive(self):
        field = realize(self.SPEC, (49, 49, 49), 1.0 / 24,
                        (-1.0, -1.0, -1.0))
        from scipy import ndimage
        lap = np.zeros(field.shape)
        H = field.hessian_arrays()
        for a in range(3):
            lap += H[a, a]
        live = field.live_mask()
        far = ndimage.distance_transform_edt(live) > 3.0
        inner = np.zeros(field.shape, dtype=bool)
        inner[2:-2, 2:-2, 2:-2] = True
        sel = live & far & inner
        assert float(np.mean(np.abs(lap[sel]))) < 0.02


def test_realize_rejects_unresolved_neck():
    spec = ExactSpec(kind="synthetic_neck", e=np.array([0.0, 0.0, 1.0]),
                     y=np.zeros(3), r_neck=0.01)
    with pytest.raises(InvalidSpec):
        realize(spec, (17, 17, 17), 0.125, (-1.0, -1.0, -1.0))


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        ExactSpec(kind="mystery")
    with pytest.raises(InvalidSpec):
        ExactSpec(kind="vee", e=np.array([1.0, 1.0]))    # not unit norm


def test_spec_json_round_trip():
    spec = sample_harmonic_polynomial(4, 42)
    back = ExactSpec.from_json(spec.to_json())
    assert back.kind == "harmonic_poly"
    assert back.poly.coeffs == spec.poly.coeffs
    neck = ExactSpec(kind="synthetic_neck", e=np.array([0.0, 0.0, 1.0]),
                     y=np.array([1.0, 2.0, 3.0]), r_neck=0.5)
    back = ExactSpec.from_json(neck.to_json())
    assert back.r_neck == 0.5 and np.allclose(back.y, [1.0, 2.0, 3.0])
