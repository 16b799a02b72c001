"""Closed-form and synthetic fields used as oracles and stress inputs.

Provides the half-plane solution (e.x - b)_+, the vee |e.(x-y)|, the clamped
1D monotone profile, a synthetic two-sheet field with a catenoid-like bridge
of prescribed waist (a geometric test field, not a solution), and exactly
harmonic polynomials with analytic derivatives of every order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import InvalidSpec
from .field import ScalarField


# -- polynomials ----------------------------------------------------------------


class Poly:
    """Sparse polynomial in 3 variables: dict of exponent tuples -> coefficient.

    Supports exact differentiation, so third and higher derivatives needed by
    the stability remainder checks carry no discretization error.
    """

    def __init__(self, coeffs: dict):
        self.coeffs = {tuple(k): float(v) for k, v in coeffs.items() if v != 0.0}

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros(pts.shape[0])
        for expo, c in sorted(self.coeffs.items()):
            term = np.full(pts.shape[0], c)
            for a, p in enumerate(expo):
                if p:
                    term = term * pts[:, a] ** p
            out += term
        return out

    def diff(self, axis: int) -> "Poly":
        out = {}
        for expo, c in self.coeffs.items():
            if expo[axis] > 0:
                new = list(expo)
                new[axis] -= 1
                key = tuple(new)
                out[key] = out.get(key, 0.0) + c * expo[axis]
        return Poly(out)

    def laplacian(self) -> "Poly":
        out = {}
        for a in range(3):
            for expo, c in self.diff(a).diff(a).coeffs.items():
                out[expo] = out.get(expo, 0.0) + c
        return Poly(out)

    def scaled(self, t: float) -> "Poly":
        return Poly({k: t * v for k, v in self.coeffs.items()})

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return Poly(out)

    def gradient(self, point) -> np.ndarray:
        pt = np.atleast_2d(point)
        return np.array([self.diff(a)(pt)[0] for a in range(3)])

    def hessian(self, point) -> np.ndarray:
        pt = np.atleast_2d(point)
        H = np.zeros((3, 3))
        for a in range(3):
            for b in range(a, 3):
                H[a, b] = H[b, a] = self.diff(a).diff(b)(pt)[0]
        return H

    def third_tensor(self, point) -> np.ndarray:
        """All third partials at a point, shape (3, 3, 3)."""
        pt = np.atleast_2d(point)
        T = np.zeros((3, 3, 3))
        for a in range(3):
            da = self.diff(a)
            for b in range(3):
                dab = da.diff(b)
                for c in range(3):
                    T[a, b, c] = dab.diff(c)(pt)[0]
        return T

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.coeffs.values()))


@lru_cache(maxsize=None)
def harmonic_basis(degree: int) -> tuple:
    """Basis of homogeneous degree-`degree` harmonic polynomials in 3 variables.

    Coefficients are integers (nullspace vectors cleared of denominators), so
    the Laplacian of every basis element vanishes exactly in float arithmetic.
    """
    import sympy as sp

    if degree < 1:
        raise InvalidSpec("degree must be >= 1")
    monos = [(i, j, degree - i - j)
             for i in range(degree + 1) for j in range(degree + 1 - i)]
    targets = [(i, j, degree - 2 - i - j)
               for i in range(degree - 1) for j in range(degree - 1 - i)]
    tindex = {m: r for r, m in enumerate(targets)}
    M = sp.zeros(max(len(targets), 1), len(monos))
    for col, (i, j, k) in enumerate(monos):
        for axis, p in enumerate((i, j, k)):
            if p >= 2:
                tgt = list((i, j, k))
                tgt[axis] -= 2
                M[tindex[tuple(tgt)], col] += p * (p - 1)
    basis = []
    for vec in M.nullspace():
        denoms = [sp.fraction(sp.nsimplify(v))[1] for v in vec]
        scale = sp.lcm([sp.Integer(d) for d in denoms]) if denoms else 1
        ints = [sp.nsimplify(v * scale) for v in vec]
        coeffs = {monos[i]: float(ints[i]) for i in range(len(monos)) if ints[i] != 0}
        basis.append(Poly(coeffs))
    return tuple(basis)


# -- exact field specifications ----------------------------------------------------


@dataclass
class ExactSpec:
    """Specification of a closed-form field.

    kind: half_plane | vee | one_d_step | synthetic_neck | harmonic_poly.
    """

    kind: str
    e: Optional[np.ndarray] = None
    b: float = 0.0
    y: Optional[np.ndarray] = None
    r_neck: float = 0.0
    poly: Optional[Poly] = None
    degree: int = 0
    seed: int = 0

    KINDS = ("half_plane", "vee", "one_d_step", "synthetic_neck", "harmonic_poly")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidSpec(f"unknown exact field kind {self.kind!r}")
        if self.e is not None:
            self.e = np.asarray(self.e, dtype=np.float64)
            if abs(np.linalg.norm(self.e) - 1.0) > 1e-12:
                raise InvalidSpec("direction e must be unit norm within 1e-12")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "b": self.b, "r_neck": self.r_neck,
               "degree": self.degree, "seed": self.seed}
        if self.e is not None:
            out["e"] = list(self.e)
        if self.y is not None:
            out["y"] = list(self.y)
        if self.poly is not None:
            out["coeffs"] = {" ".join(map(str, k)): v
                             for k, v in sorted(self.poly.coeffs.items())}
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExactSpec":
        poly = None
        if "coeffs" in obj:
            poly = Poly({tuple(int(t) for t in k.split()): v
                         for k, v in obj["coeffs"].items()})
        return cls(kind=obj["kind"], e=obj.get("e"), b=obj.get("b", 0.0),
                   y=obj.get("y"), r_neck=obj.get("r_neck", 0.0), poly=poly,
                   degree=obj.get("degree", 0), seed=obj.get("seed", 0))


def _smoothstep(t: np.ndarray) -> np.ndarray:
    s = np.clip(t, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def evaluate(spec: ExactSpec, points: np.ndarray) -> np.ndarray:
    """Pointwise values of the exact field at physical points (N, dim)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if spec.kind == "half_plane":
        return np.maximum(pts @ spec.e - spec.b, 0.0)
    if spec.kind == "vee":
        y = spec.y if spec.y is not None else np.zeros(pts.shape[1])
        return np.abs((pts - y) @ spec.e)
    if spec.kind == "one_d_step":
        return np.clip(pts @ spec.e - spec.b, -1.0, 1.0)
    if spec.kind == "synthetic_neck":
        return _neck_values(spec, pts)
    if spec.kind == "harmonic_poly":
        return spec.poly(pts)
    raise InvalidSpec(f"cannot evaluate kind {spec.kind!r}")


def _neck_values(spec: ExactSpec, pts: np.ndarray) -> np.ndarray:
    """Harmonic field vanishing exactly on the plane minus a disk of radius w.

    In oblate spheroidal coordinates about y with axis e (lambda >= 0 and
    eta in [-1, 1] solving rho^2 = w^2 (1+lambda^2)(1-eta^2), z = w lambda
    eta), the field is

        u = w |eta| (lambda + (2/pi)(1 - lambda arccot lambda)),

    the classical solution of the mixed problem: zero on {z = 0, rho >= w},
    positive elsewhere, asymptotic to the vee |z| at infinity, and smooth
    through the waist disk because the 2/pi weight cancels the |z| kink of
    |eta| there.  Its Hessian concentrates on the waist circle rho = w,
    which is what the threshold-radius machinery is built to detect.
    """
    w = spec.r_neck
    y = spec.y if spec.y is not None else np.zeros(pts.shape[1])
    rel = pts - y
    z = rel @ spec.e
    d2 = np.sum(rel * rel, axis=1)
    # lambda^2 and eta^2 are the roots of t^2 - A t - B with A = (|x|^2 -
    # w^2)/w^2 and B = z^2/w^2 (from lambda^2 - eta^2 = A, lambda eta = z/w)
    A = d2 / w ** 2 - 1.0
    B = (z / w) ** 2
    disc = np.sqrt(A * A + 4.0 * B)
    lam = np.sqrt(np.maximum(0.0, 0.5 * (A + disc)))
    eta = np.sqrt(np.maximum(0.0, 0.5 * (disc - A)))
    g = lam + (2.0 / math.pi) * (1.0 - lam * np.arctan2(1.0, lam))
    return w * eta * g


def realize(spec: ExactSpec, shape, spacing: float, origin) -> ScalarField:
    """Sample the exact field on a grid, tagging the appropriate phase kind."""
    if spec.kind == "synthetic_neck" and spec.r_neck < 2.0 * spacing:
        raise InvalidSpec("neck waist r_neck must be >= 2h on the target grid")
    kind = {"half_plane": "bernoulli", "vee": "bernoulli",
            "one_d_step": "allen_cahn", "synthetic_neck": "bernoulli",
            "harmonic_poly": "generic"}[spec.kind]
    return ScalarField.from_function(lambda p: evaluate(spec, p),
                                     tuple(shape), spacing, origin, kind=kind)


def sample_harmonic_polynomial(degree: int, seed: int) -> ExactSpec:
    """Random unit-norm combination of the exact harmonic basis of `degree`."""
    if degree not in (2, 3, 4):
        raise InvalidSpec("degree must be in {2, 3, 4}")
    basis = harmonic_basis(degree)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(len(basis))
    c /= np.linalg.norm(c)
    poly = Poly({})
    for ci, b in zip(c, basis):
        # Snap the mixing weight to a dyadic lattice: products with the
        # integer basis coefficients and their sums are then exact in float
        # arithmetic, so the Laplacian of the combination is identically 0.0.
        t = round(ci / b.norm() * 2 ** 20) / 2 ** 20
        poly = poly + b.scaled(t)
    return ExactSpec(kind="harmonic_poly", poly=poly, degree=degree, seed=seed)
