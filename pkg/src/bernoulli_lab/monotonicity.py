"""Weiss, Monneau and T energies and the exact relations among them.

All quantities are dimensionless after the scaling built into their
definitions:

* ``W(u, x0, r)  = r^-n     int_{B_r} (|grad u|^2 + 1_{u>0})
                 - r^-(n+1) int_{dB_r} u^2``
* ``M(u, x0, r, e) = r^-(n+1) int_{dB_r} (u - |e.(x-x0)|)^2``
* ``T(u, x0, r, e) = r^-(n+2) int_{B_r} (u - |e.(x-x0)|)^2``

For one-homogeneous fields about x0 all three are radius-independent; for
stationary points of the volume-penalized Dirichlet energy W is nondecreasing
with derivative ``dW/dr = 2 r^-(n+2) int_{dB_r} (u - (x-x0).grad u)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidSpec, OutOfDomain
from .field import Region, ScalarField, integrate_region, integrate_sphere

#: geometric ratio of the radius stencils used for derivative estimates
RADIUS_RATIO = 2.0 ** 0.25

#: relative residual floor that avoids division blowup on exact-zero cases
RESIDUAL_FLOOR = 1e-12


@dataclass
class DiagnosticSeries:
    """Radius-indexed records of diagnostic quantities for sweep experiments."""

    center: np.ndarray
    radii: np.ndarray
    values: dict                       # name -> array over radii
    derivatives: dict = dc_field(default_factory=dict)
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=np.float64)
        if len(self.radii) < 2:
            raise InvalidSpec("a diagnostic series needs at least 2 radii")
        if np.any(np.diff(self.radii) <= 0):
            raise InvalidSpec("radii must be strictly increasing")
        for name, vals in self.values.items():
            if not np.all(np.isfinite(vals)):
                raise InvalidSpec(f"series {name!r} contains non-finite values")

    def monotonicity_violations(self, name: str, tol: float) -> int:
        vals = self.values[name]
        return int(np.sum(np.diff(vals) < -tol))

    def rows(self) -> list:
        names = sorted(self.values)
        out = []
        for i, r in enumerate(self.radii):
            row = {"radius": float(r)}
            for n in names:
                row[n] = float(self.values[n][i])
            for n in sorted(self.derivatives):
                row["d_" + n] = float(self.derivatives[n][i])
            out.append(row)
        return out


def _check_radius(field: ScalarField, x0, r: float):
    if r < 4.0 * field.spacing:
        raise OutOfDomain(f"radius {r:g} below the 4h floor")
    x0 = np.asarray(x0, dtype=np.float64)
    if np.any(x0 - r < field.origin) or np.any(x0 + r > field.upper):
        raise OutOfDomain("ball exits the grid")
    return x0


def weiss(field: ScalarField, x0, r: float) -> float:
    """Boundary-adjusted scale-normalized energy W(u, x0, r)."""
    x0 = _check_radius(field, x0, r)
    n = field.dimension
    gsq = field.grad_norm_sq_array()
    vol = integrate_region(field, gsq + 1.0, Region.ball(x0, r), restrict="positive")
    u2 = integrate_sphere(field, lambda p: field.interp(p) ** 2, x0, r)
    return vol / r ** n - u2 / r ** (n + 1)


def weiss_derivative_rhs(field: ScalarField, x0, r: float) -> float:
    """The closed-form dW/dr: 2 r^-(n+2) int_{dB_r} (u - (x-x0).grad u)^2."""
    x0 = _check_radius(field, x0, r)
    n = field.dimension

    def integrand(pts):
        u = field.interp(pts)
        g = field.gradient_at_many(pts, clamp=True)
        rad = np.einsum("ij,ij->i", pts - x0, g)
        vals = (u - rad) ** 2
        # the integrand vanishes identically on the dead phase; gate it by
        # the ghost-extended sign so the near-boundary band (where ghost
        # derivatives are nonzero by construction) does not leak in
        if field.kind == "bernoulli":
            vals = np.where(field.interp_array(field.ghost_values(), pts) > 0.0,
                            vals, 0.0)
        elif field.kind == "allen_cahn":
            vals = np.where(np.abs(field.interp_array(field.ghost_values(), pts)) < 1.0,
                            vals, 0.0)
        return vals

    val = integrate_sphere(field, integrand, x0, r)
    return 2.0 * val / r ** (n + 2)


def weiss_derivative_fd(field: ScalarField, x0, r: float,
                        width: float = 0.08, npts: int = 9) -> float:
    """Finite-difference estimate of dW/dr at r.

    W(r) carries O(1e-3) quadrature ripple as spheres slide across grid
    cells, so a 2-point difference is noisy; a least-squares slope over a
    small radius window averages it out.
    """
    rs = r * np.linspace(1.0 - width, 1.0 + width, npts)
    ws = np.array([weiss(field, x0, s) for s in rs])
    return float(np.polyfit(rs, ws, 1)[0])


def _vee_deficit_array(field: ScalarField, x0: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Node samples of u - V_{x0,e}.

    The vee is sampled on the same grid so that the comparison interpolates
    consistently: when u *is* that vee the deficit vanishes exactly.
    """
    key = ("vee_deficit", tuple(x0), tuple(e))
    if key not in field._cache:
        rel = field.node_coords() - x0
        field._cache[key] = field.values - np.abs(rel @ e)
    return field._cache[key]


def _vee_distance_sq(field: ScalarField, x0: np.ndarray, e: np.ndarray):
    deficit = _vee_deficit_array(field, x0, e)

    def integrand(pts):
        return field.interp_array(deficit, pts) ** 2
    return integrand


def monneau(field: ScalarField, x0, r: float, e) -> float:
    """Sphere-averaged squared distance of u to the vee V_{x0,e}."""
    x0 = _check_radius(field, x0, r)
    e = Region._unit(e)
    n = field.dimension
    val = integrate_sphere(field, _vee_distance_sq(field, x0, e), x0, r)
    return val / r ** (n + 1)


def t_energy(field: ScalarField, x0, r: float, e) -> float:
    """Ball-averaged squared distance of u to the vee V_{x0,e}."""
    x0 = _check_radius(field, x0, r)
    e = Region._unit(e)
    n = field.dimension
    val = integrate_region(field, _vee_distance_sq(field, x0, e), Region.ball(x0, r))
    return val / r ** (n + 2)


def check_tm_relation(field: ScalarField, x0, r1: float, r2: float, e) -> float:
    """Relative residual of r2^{n+2} T(r2) - r1^{n+2} T(r1) = int s^{n+1} M ds.

    The s-integral uses composite Simpson over >= 16 intervals.
    """
    if not r1 < r2:
        raise InvalidSpec("need r1 < r2")
    n = field.dimension
    lhs = r2 ** (n + 2) * t_energy(field, x0, r2, e) \
        - r1 ** (n + 2) * t_energy(field, x0, r1, e)
    m = 16
    s = np.linspace(r1, r2, m + 1)
    vals = np.array([s_i ** (n + 1) * monneau(field, x0, s_i, e) for s_i in s])
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    rhs = float(np.sum(w * vals)) * (r2 - r1) / (3.0 * m)
    return abs(lhs - rhs) / max(abs(lhs), RESIDUAL_FLOOR)


def _radius_stencil(field: ScalarField, x0, r: float, fn) -> tuple:
    """5-point geometric radius stencil values and the derivative at r."""
    rs = np.array([r * RADIUS_RATIO ** k for k in range(-2, 3)])
    vals = np.array([fn(field, x0, s) for s in rs])
    dv = np.gradient(vals, rs)
    return vals[2], dv[2]


def check_monneau_inequalities(field: ScalarField, x0, r: float, eta: float, e):
    """Slacks (RHS - LHS) of the three Weiss/Monneau/T relations.

    (i)   dW/dr >= 2 r (d sqrt(M) / dr)^2
    (ii)  M(r) <= |log eta| (W(r) - W(eta r)) + 2 M(eta r)
    (iii) T(r) <= |log eta|/(n+2) (W(r) - W(eta r))
                  + 2/(n+2) M(eta r) + eta^{n+2} T(eta r)
    """
    if not 0.0 < eta < 1.0:
        raise InvalidSpec("eta must be in (0, 1)")
    if eta * r < 4.0 * field.spacing:
        raise OutOfDomain("eta * r below the 4h floor")
    n = field.dimension
    e = Region._unit(e)

    mfun = lambda f, x, s: monneau(f, x, s, e)
    w_r, dw = _radius_stencil(field, x0, r, weiss)
    m_r, _ = _radius_stencil(field, x0, r, mfun)
    rs = np.array([r * RADIUS_RATIO ** k for k in range(-2, 3)])
    sq = np.sqrt(np.maximum([mfun(field, x0, s) for s in rs], 0.0))
    dsq = np.gradient(sq, rs)[2]

    w_eta = weiss(field, x0, eta * r)
    m_eta = monneau(field, x0, eta * r, e)
    t_eta = t_energy(field, x0, eta * r, e)
    t_r = t_energy(field, x0, r, e)

    slack1 = dw - 2.0 * r * dsq ** 2
    log_eta = abs(math.log(eta))
    slack2 = log_eta * (w_r - w_eta) + 2.0 * m_eta - m_r
    slack3 = (log_eta / (n + 2) * (w_r - w_eta)
              + 2.0 / (n + 2) * m_eta
              + eta ** (n + 2) * t_eta - t_r)
    return slack1, slack2, slack3


def sweep(field: ScalarField, x0, radii: Sequence[float], quantities: Sequence[str],
          e=None) -> DiagnosticSeries:
    """Evaluate requested quantities over a radius list.

    Quantities: "W", "dW_rhs", "M", "T".  A centered finite-difference
    estimate of dW/dr is attached whenever W is requested.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    radii = np.asarray(sorted(radii), dtype=np.float64)
    values: dict = {}
    for q in quantities:
        if q == "W":
            values["W"] = np.array([weiss(field, x0, r) for r in radii])
        elif q == "dW_rhs":
            values["dW_rhs"] = np.array(
                [weiss_derivative_rhs(field, x0, r) for r in radii])
        elif q == "M":
            values["M"] = np.array([monneau(field, x0, r, e) for r in radii])
        elif q == "T":
            values["T"] = np.array([t_energy(field, x0, r, e) for r in radii])
        else:
            raise InvalidSpec(f"unknown sweep quantity {q!r}")
    derivs = {}
    if "W" in values:
        derivs["W"] = np.gradient(values["W"], radii)
    return DiagnosticSeries(center=x0, radii=radii, values=values,
                            derivatives=derivs,
                            direction=None if e is None else np.asarray(e, float))
