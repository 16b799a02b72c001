"""Symmetric and asymmetric excess functionals and their decay sweeps.

The symmetric excess measures how far a field is from the nearest vee at a
given scale:

    E_z(u, R) = min_e sqrt( R^-2 avg_{B_R(z)} |u - V_{z,e}|^2 ).

The asymmetric excess fits a separate affine function on each signed
component and keeps the worse side:

    A_z(u, R) = max_{U in {U+, U-}} min_{|a|=1, b}
                (R |B_R|)^-1 int_{U cap B_R} |u - a.x - b|.

Both are dimensionless and scale invariant.  The sweep utilities report
them side by side with the curvature density rho_z and the covering count
so decay exponents can be read off a single table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegion, InvalidSpec, OutOfDomain, SideEmpty
from .field import Region, ScalarField, sphere_lattice
from .monotonicity import DiagnosticSeries
from .neck import vee_fit

#: decay exponent of the excess iteration, reported in sweep tables
GAMMA = 11.0 / 25.0
#: exponent balancing excess against curvature density in center selection
ALPHA = 39.0 / 50.0
#: covering-count exponent margin
BETA_CIRC = 1.0 / 20.0
#: smallness threshold entering the improvement step
CHI = 1.0 / 500.0

#: unit-ball volumes by dimension (|B_1| in R^n)
_UNIT_BALL = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


@dataclass
class AffineFit:
    """Best L1 affine approximation u ~ a.x + b on a cell region."""

    direction: np.ndarray          # unit vector a
    offset: float                  # b
    residual: float                # mean absolute deviation over the region
    norm: str
    iterations: int
    degenerate: bool = False

    def __post_init__(self):
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise InvalidSpec("fit direction must be unit norm within 1e-12")
        if self.residual < 0:
            raise InvalidSpec("fit residual must be nonnegative")


# ---------------------------------------------------------------------------
# symmetric excess
# ---------------------------------------------------------------------------

def symmetric_excess(field: ScalarField, z, R: float) -> dict:
    """E_z(u, R): best vee-fit L2 average over B_R(z), divided by R."""
    z = np.asarray(z, dtype=np.float64)
    if R < 8.0 * field.spacing:
        raise OutOfDomain(f"radius {R:g} below the 8h floor")
    fit = vee_fit(field, z, R, norm="L2")
    return {"E": fit.residual / R, "direction": fit.direction, "fit": fit}


# ---------------------------------------------------------------------------
# L1 plane fitting
# ---------------------------------------------------------------------------

def _weighted_median(vals: np.ndarray, w: np.ndarray) -> float:
    order = np.argsort(vals)
    cw = np.cumsum(w[order])
    cut = 0.5 * cw[-1]
    return float(vals[order][int(np.searchsorted(cw, cut))])

def _region_samples(field: ScalarField, region):
    """(points, values, weights) of the grid cells selected by `region`.

    `region` may be a boolean node mask or a geometric Region; weights are
    the partial-cell coverage ramps for geometric regions and 1 for masks.
    """
    coords = field.node_coords()
    if isinstance(region, Region) and region.kind != "mask":
        flat = coords.reshape(-1, field.dimension)
        w = np.clip(0.5 + region.signed(flat) / field.spacing, 0.0, 1.0)
        sel = w > 0.0
        return flat[sel], field.values.reshape(-1)[sel], w[sel]
    mask = region.mask if isinstance(region, Region) else np.asarray(region, dtype=bool)
    if mask.shape != field.shape:
        raise InvalidSpec("region mask shape does not match the grid")
    return coords[mask], field.values[mask], np.ones(int(mask.sum()))


def plane_fit_l1(field: ScalarField, region, max_outer: int = 200) -> AffineFit:
    """Best L1 fit of a unit-slope affine function a.x + b on a region.

    Alternates the two exact coordinate minimizations: for fixed a the
    optimal b is the weighted median of u - a.x; for fixed b the direction
    is improved by projected subgradient steps on the sphere.  The start
    point is the best of a coarse direction lattice, so the result is never
    worse than the lattice optimum.
    """
    pts, vals, w = _region_samples(field, region)
    if len(pts) == 0:
        raise EmptyRegion("plane fit requested on an empty region")
    d = pts.shape[1]
    scale = float(np.max(np.abs(vals))) + 1e-30

    if len(pts) == 1:
        a = np.zeros(d)
        a[-1] = 1.0
        return AffineFit(direction=a, offset=float(vals[0] - pts[0] @ a),
                         residual=0.0, norm="L1", iterations=0,
                         degenerate=True)

    wsum = float(np.sum(w))

    def residual(a, b):
        return float(np.sum(np.abs(vals - pts @ a - b) * w)) / wsum

    # coarse lattice warm start
    dirs = sphere_lattice(d, 128 if d == 2 else 512)
    best_a, best_b, best_r = None, 0.0, math.inf
    for a in dirs:
        b = _weighted_median(vals - pts @ a, w)
        r = residual(a, b)
        if r < best_r:
            best_a, best_b, best_r = a.copy(), b, r
    a, b, r0 = best_a, best_b, best_r
    # projected subgradient with an expanding/shrinking trust step; the
    # objective is convex and piecewise linear in a, so a line search along
    # the tangential subgradient converges to the vertex
    t = 2.0 * math.pi / len(dirs)
    iters = 0
    for k in range(1, max_outer + 1):
        iters = k
        s = np.sign(vals - pts @ a - b)
        g = -np.sum((s * w)[:, None] * pts, axis=0) / wsum
        g -= (g @ a) * a
        gn = np.linalg.norm(g)
        if gn < 1e-15 or t < 1e-10:
            break
        step_dir = -g / gn
        improved = False
        for tk in (4.0 * t, t, 0.25 * t, 0.0625 * t):
            cand = a + tk * step_dir
            cand /= np.linalg.norm(cand)
            cb = _weighted_median(vals - pts @ cand, w)
            cr = residual(cand, cb)
            if cr < best_r:
                improve = best_r - cr
                a, b, best_r, t = cand, cb, cr, tk
                improved = True
                break
        if not improved:
            t *= 0.0625
        elif improve < 1e-8 * (r0 + 1e-30) and t < 1e-6:
            break
    return AffineFit(direction=a, offset=b, residual=best_r, norm="L1",
                     iterations=iters)


def plane_fit_lattice_oracle(field: ScalarField, region,
                             n_dirs: int = 0) -> AffineFit:
    """Independent brute-force reference: dense direction lattice with the
    exact median offset per direction.  Used to bound plane_fit_l1."""
    pts, vals, w = _region_samples(field, region)
    if len(pts) == 0:
        raise EmptyRegion("plane fit requested on an empty region")
    d = pts.shape[1]
    if n_dirs <= 0:
        n_dirs = 512 if d == 2 else 2048
    wsum = float(np.sum(w))
    best = None
    for a in sphere_lattice(d, n_dirs):
        b = _weighted_median(vals - pts @ a, w)
        r = float(np.sum(np.abs(vals - pts @ a - b) * w)) / wsum
        if best is None or r < best[2]:
            best = (a.copy(), b, r)
    return AffineFit(direction=best[0], offset=best[1], residual=best[2],
                     norm="L1", iterations=0)


# ---------------------------------------------------------------------------
# asymmetric excess
# ---------------------------------------------------------------------------

def asymmetric_excess(field: ScalarField, z, R: float,
                      omega_plus, omega_minus) -> dict:
    """A_z(u, R): worse-side scaled L1 affine deficit over the signed masks.

    Each side is fit independently on (mask intersect B_R(z)); the residual
    integral is normalized by R |B_R| with the full-ball volume, so thin
    sides contribute proportionally less.
    """
    z = np.asarray(z, dtype=np.float64)
    if R < 8.0 * field.spacing:
        raise OutOfDomain(f"radius {R:g} below the 8h floor")
    coords = field.node_coords()
    rel = coords - z
    inball = np.einsum("...i,...i->...", rel, rel) <= R * R
    d = field.dimension
    ball_vol = _UNIT_BALL[d] * R ** d
    out = {}
    for name, mask in (("plus", omega_plus), ("minus", omega_minus)):
        side = np.asarray(mask, dtype=bool) & inball
        if not np.any(side):
            raise SideEmpty(f"omega_{name} does not meet B_R(z)", side=name)
        fit = plane_fit_l1(field, side)
        integral = fit.residual * float(side.sum()) * field.spacing ** d
        out[name] = {"fit": fit, "value": integral / (R * ball_vol)}
    out["A"] = max(out["plus"]["value"], out["minus"]["value"])
    return out


# ---------------------------------------------------------------------------
# decay sweeps
# ---------------------------------------------------------------------------

def _half_space_masks(field: ScalarField, z: np.ndarray, e: np.ndarray):
    """Signed live-phase half spaces about z along the fitted direction."""
    axial = (field.node_coords() - z) @ e
    live = field.live_mask()
    return live & (axial > 0), live & (axial < 0)


def excess_sweep(field: ScalarField, z, radii,
                 eta0: float = 0.1, zeta: float = 0.25) -> DiagnosticSeries:
    """Joint radius sweep of E, A, rho, covering count N and max r_star.

    The signed masks for A are the live-phase half spaces of the per-radius
    fitted vee direction.  max_rstar scans the free-boundary nodes of
    B_{3R/2}(z) on the fast threshold-radius map (0 when none is finite).
    Derivatives carry the log-log least-squares decay exponents of E and A.
    """
    from .neck import _fb_grid_candidates, _rstar_map, covering_count
    from .stability import rho_z

    z = np.asarray(z, dtype=np.float64)
    radii = np.asarray(sorted(float(r) for r in radii))
    if len(radii) < 2:
        raise InvalidSpec("a sweep needs at least 2 radii")
    h = field.spacing
    rmap = _rstar_map(field, eta0)
    fb_idx = _fb_grid_candidates(field)
    fb_pos = field.origin + h * np.asarray(fb_idx, dtype=np.float64)
    fb_r = np.array([float(rmap[i]) for i in fb_idx])

    E, A, rho, N, mx = [], [], [], [], []
    for R in radii:
        se = symmetric_excess(field, z, R)
        E.append(se["E"])
        mp, mm = _half_space_masks(field, z, se["direction"])
        try:
            A.append(asymmetric_excess(field, z, R, mp, mm)["A"])
        except SideEmpty:
            A.append(0.0)
        rho.append(rho_z(field, z, min(2.0 * R, _margin(field, z))))
        if field.dimension == 3 and zeta * R >= 4.0 * h:
            N.append(covering_count(field, z, R, zeta, eta0=eta0))
        else:
            N.append(0.0)
        if len(fb_pos):
            near = np.linalg.norm(fb_pos - z, axis=1) <= 1.5 * R
            finite = fb_r[near][np.isfinite(fb_r[near])]
            mx.append(float(np.max(finite)) if len(finite) else 0.0)
        else:
            mx.append(0.0)

    values = {"E": np.array(E), "A": np.array(A), "rho": np.array(rho),
              "N": np.array(N), "max_rstar": np.array(mx)}
    series = DiagnosticSeries(center=z, radii=radii, values=values)
    noise = 2.0 * h / radii
    for name in ("E", "A"):
        v = values[name]
        if np.all(v <= noise):
            series.derivatives[name + "_exponent"] = np.full(len(radii), np.nan)
            series.derivatives[name + "_at_noise_floor"] = np.ones(len(radii))
        else:
            ok = v > 0
            slope = float(np.polyfit(np.log(radii[ok]), np.log(v[ok]), 1)[0])
            series.derivatives[name + "_exponent"] = np.full(len(radii), slope)
            series.derivatives[name + "_at_noise_floor"] = np.zeros(len(radii))
    ratio = np.full(len(radii), np.nan)
    ratio[1:] = values["E"][:-1] / np.maximum(values["E"][1:], 1e-300)
    series.derivatives["E_halving_ratio"] = ratio
    return series


def _margin(field: ScalarField, z: np.ndarray) -> float:
    return float(min(np.min(z - field.origin), np.min(field.upper - z)))
