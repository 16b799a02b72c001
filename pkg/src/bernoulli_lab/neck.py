"""Neck detection and covering structures: threshold radii, dyadic Vitali
neck centers, directional vee fitting, polarity ball trees, the signed
regions Omega+/Omega-, covering counts, and center/scale selection.

A *neck* is a bridge joining the two sheets of the positivity set; it is
signalled by a finite threshold radius

    r_star(y) = inf { r : int_{B_r(y) cap {u>0}} |D^2 u|^3 >= eta0^3 },

since away from necks the field is vee-like and its Hessian mass vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage, signal

from .errors import (EmptySeed, FitFailure, InvalidSpec, NoCandidate,
                     OutOfDomain)
from .field import Region, ScalarField, integrate_region, sphere_lattice
from .mesh import extract_free_boundary

DEFAULT_ETA0 = 0.1
DEFAULT_THETA = 0.125
DEFAULT_M = 32.0
THETA_CAP = 0.25


@dataclass(frozen=True)
class RStar:
    """Threshold radius with an explicit infinity sentinel.

    `finite` is False when the cubed-Hessian mass never reaches eta0^3 inside
    the grid; `censored` marks sentinels where mass was still accumulating
    when the bracket hit the domain edge (so the true value might be finite).
    """

    value: float
    finite: bool
    censored: bool = False

    def __float__(self):
        return self.value if self.finite else math.inf


@dataclass
class NeckCenter:
    position: np.ndarray
    r_star: float
    dyadic_class: int
    grid_index: tuple


@dataclass
class BallTreeNode:
    center: np.ndarray
    radius: float
    level: int
    polarity: np.ndarray
    kind: str                      # branching | regular_terminal | neck_terminal
    residual: float
    children: list = dc_field(default_factory=list)
    parent: Optional["BallTreeNode"] = None

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class FitResult:
    direction: np.ndarray
    residual: float
    norm: str


# ---------------------------------------------------------------------------
# threshold radius
# ---------------------------------------------------------------------------

def _hess_cubed_array(field: ScalarField) -> np.ndarray:
    key = "hess_cubed"
    if key not in field._cache:
        field._cache[key] = field.hess_norm_sq_array() ** 1.5
    return field._cache[key]


def _ball_mass(field: ScalarField, y: np.ndarray, r: float) -> float:
    return integrate_region(field, _hess_cubed_array(field),
                            Region.ball(y, r), restrict="positive")


def _max_radius(field: ScalarField, y: np.ndarray) -> float:
    return float(min(np.min(y - field.origin), np.min(field.upper - y))) \
        - 0.5 * field.spacing


def threshold_radius(field: ScalarField, y, eta0: float = DEFAULT_ETA0) -> RStar:
    """Bisection for r_star(y) to resolution h/4, with an infinity sentinel."""
    if eta0 <= 0:
        raise InvalidSpec("eta0 must be positive")
    y = np.asarray(y, dtype=np.float64)
    h = field.spacing
    target = eta0 ** 3
    hi = _max_radius(field, y)
    if hi < 2.0 * h:
        raise OutOfDomain("point too close to the grid edge")
    m_hi = _ball_mass(field, y, hi)
    if m_hi < target:
        return RStar(math.inf, finite=False,
                     censored=bool(m_hi > 1e-3 * target))
    lo = 2.0 * h
    if _ball_mass(field, y, lo) >= target:
        return RStar(lo, finite=True)
    while hi - lo > 0.25 * h:
        mid = 0.5 * (lo + hi)
        if _ball_mass(field, y, mid) >= target:
            hi = mid
        else:
            lo = mid
    return RStar(hi, finite=True)


# ---------------------------------------------------------------------------
# fast r_star maps and Vitali neck centers
# ---------------------------------------------------------------------------

def _ball_kernel(dim: int, r_cells: float) -> np.ndarray:
    k = int(math.floor(r_cells))
    ax = np.arange(-k, k + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    d2 = sum(g * g for g in grids)
    return (d2 <= r_cells * r_cells).astype(np.float64)

def _rstar_map(field: ScalarField, eta0: float) -> np.ndarray:
    """Approximate r_star at every node via FFT ball sums of |D^2 u|^3 over a
    geometric radius ladder (ratio 2^{1/4}); +inf where never reached."""
    h = field.spacing
    d = field.dimension
    q = np.where(field.live_mask(), _hess_cubed_array(field), 0.0) * h ** d
    target = eta0 ** 3
    out = np.full(field.shape, math.inf)
    rmax = 0.45 * float(np.min(np.asarray(field.shape) - 1)) * h
    r = 2.0 * h
    while r <= rmax:
        ker = _ball_kernel(d, r / h)
        mass = signal.fftconvolve(q, ker, mode="same")
        out = np.where(np.isinf(out) & (mass >= target), r, out)
        r *= 2.0 ** 0.25
    return out


def _fb_grid_candidates(field: ScalarField) -> list:
    """Grid indices adjacent to the free boundary, in lexicographic order."""
    live = field.live_mask()
    if field.kind == "bernoulli":
        phase = field.values > field.positivity_tol()
    elif field.kind == "allen_cahn":
        phase = np.abs(field.values) < 1.0 - 1e-12
    else:
        phase = live
    # nodes where the phase flips across any axis neighbour
    edge = np.zeros(field.shape, dtype=bool)
    for a in range(field.dimension):
        sl_lo = [slice(None)] * field.dimension
        sl_hi = [slice(None)] * field.dimension
        sl_lo[a] = slice(None, -1)
        sl_hi[a] = slice(1, None)
        flip = phase[tuple(sl_lo)] != phase[tuple(sl_hi)]
        edge[tuple(sl_lo)] |= flip
        edge[tuple(sl_hi)] |= flip
    return [tuple(int(i) for i in idx) for idx in np.argwhere(edge)]


def neck_centers(field: ScalarField, eta0: float = DEFAULT_ETA0,
                 refine: bool = True) -> List[NeckCenter]:
    """Dyadic-class greedy Vitali selection of neck centers.

    Candidates are free-boundary-adjacent grid nodes with finite approximate
    r_star.  Classes k collect radii in [r_min 2^k, r_min 2^{k+1}); within a
    class, processed coarsest class first, a candidate is excluded when its
    4 r_star ball meets an earlier-class center, and selected greedily (in
    lexicographic grid order) subject to pairwise-disjoint B_{r_star} balls.
    Selected radii are re-resolved by exact bisection when `refine`.
    """
    h = field.spacing
    rmap = _rstar_map(field, eta0)
    cands = [(idx, float(rmap[idx])) for idx in _fb_grid_candidates(field)]
    cands = [(idx, r) for idx, r in cands if math.isfinite(r)]
    if not cands:
        return []
    r_min = min(r for _, r in cands)
    selected: List[NeckCenter] = []
    max_k = int(math.floor(math.log2(max(r for _, r in cands) / r_min))) + 1
    for k in range(max_k + 1):
        lo, hi = r_min * 2.0 ** k, r_min * 2.0 ** (k + 1)
        cls = [(idx, r) for idx, r in cands if lo <= r < hi]
        chosen: List[NeckCenter] = []
        for idx, r in cls:                      # lexicographic by argwhere
            pos = field.origin + h * np.asarray(idx, dtype=np.float64)
            # exclusion against earlier classes
            if any(np.linalg.norm(pos - c.position) < 4.0 * r + c.r_star
                   for c in selected if c.dyadic_class < k):
                continue
            # Vitali disjointness within the class
            if any(np.linalg.norm(pos - c.position) < r + c.r_star
                   for c in chosen):
                continue
            chosen.append(NeckCenter(position=pos, r_star=r,
                                     dyadic_class=k, grid_index=idx))
        selected.extend(chosen)
    if refine:
        for c in selected:
            try:
                rs = threshold_radius(field, c.position, eta0)
            except OutOfDomain:
                continue
            if rs.finite:
                c.r_star = rs.value
    return selected


# ---------------------------------------------------------------------------
# vee fitting
# ---------------------------------------------------------------------------

def _ball_samples(field: ScalarField, y: np.ndarray, R: float):
    key = ("ball_samples", tuple(y), R)
    if key in field._cache:
        return field._cache[key]
    h = field.spacing
    coords = field.node_coords()
    rel = coords - y
    dist = np.linalg.norm(rel, axis=-1)
    sel = dist <= R + 0.5 * h
    rel = rel[sel]
    vals = field.values[sel]
    w = np.clip(0.5 + (R - dist[sel]) / h, 0.0, 1.0)
    field._cache[key] = (rel, vals, w)
    return field._cache[key]


def _vee_residuals(rel, vals, w, dirs, norm: str) -> np.ndarray:
    proj = np.abs(rel @ dirs.T)                 # (N, m)
    diff = np.abs(vals[:, None] - proj)
    if norm == "Linf":
        return np.max(np.where(w[:, None] > 0, diff, 0.0), axis=0)
    wsum = np.sum(w)
    if norm == "L1":
        return np.sum(diff * w[:, None], axis=0) / wsum
    return np.sqrt(np.sum(diff ** 2 * w[:, None], axis=0) / wsum)


def vee_fit(field: ScalarField, y, R: float,
            norm: str = "L2") -> FitResult:
    """Best-fit vee direction in B_R(y): coarse antipodally-reduced sphere
    scan followed by Nelder-Mead refinement on the angles."""
    from scipy import optimize

    if norm not in ("L2", "L1", "Linf"):
        raise InvalidSpec(f"unknown norm {norm!r}")
    y = np.asarray(y, dtype=np.float64)
    if np.any(y - R < field.origin - 1e-12) or np.any(y + R > field.upper + 1e-12):
        raise OutOfDomain("ball exits the grid")
    d = field.dimension
    rel, vals, w = _ball_samples(field, y, R)
    m = 256 if d == 2 else 512
    dirs = sphere_lattice(d, 2 * m)
    # vees are even in e: keep one representative per antipodal pair
    keep = dirs[:, -1] > 0
    keep |= (np.abs(dirs[:, -1]) <= 1e-12) & (dirs[:, 0] > 0)
    dirs = dirs[keep]
    res = _vee_residuals(rel, vals, w, dirs, norm)
    e0 = dirs[int(np.argmin(res))]

    def to_angles(e):
        if d == 2:
            return [math.atan2(e[1], e[0])]
        return [math.atan2(e[1], e[0]), math.acos(np.clip(e[2], -1, 1))]

    def from_angles(a):
        if d == 2:
            return np.array([math.cos(a[0]), math.sin(a[0])])
        return np.array([math.sin(a[1]) * math.cos(a[0]),
                         math.sin(a[1]) * math.sin(a[0]),
                         math.cos(a[1])])

    def objective(a):
        return _vee_residuals(rel, vals, w, from_angles(a)[None], norm)[0]

    opt = optimize.minimize(objective, to_angles(e0), method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-12,
                                     "maxiter": 400})
    e = from_angles(opt.x)
    e /= np.linalg.norm(e)
    best = min(float(opt.fun), float(np.min(res)))
    if float(opt.fun) > float(np.min(res)):
        e = e0
    return FitResult(direction=e, residual=best, norm=norm)


# ---------------------------------------------------------------------------
# ball tree
# ---------------------------------------------------------------------------

def _zero_nodes_in_ball(field: ScalarField, y: np.ndarray, rho: float):
    """(positions, indices) of FB-adjacent grid nodes inside B_rho(y)."""
    h = field.spacing
    idxs = _fb_grid_candidates(field)
    pos = field.origin + h * np.asarray(idxs, dtype=np.float64)
    if len(pos) == 0:
        return np.zeros((0, field.dimension)), []
    sel = np.linalg.norm(pos - y, axis=1) <= rho
    return pos[sel], [idxs[i] for i in np.nonzero(sel)[0]]


def ball_tree(field: ScalarField, z, R: float,
              theta: float = DEFAULT_THETA, M: float = DEFAULT_M,
              eta0: float = DEFAULT_ETA0,
              fit_fraction: float = 0.3,
              max_depth: int = 8) -> BallTreeNode:
    """Rooted polarity tree of geometrically shrinking balls covering the
    zero set, branching wherever the ball is much larger than a nearby neck.
    """
    if theta > THETA_CAP:
        raise InvalidSpec(f"theta must be <= {THETA_CAP}")
    z = np.asarray(z, dtype=np.float64)
    h = field.spacing
    centers = neck_centers(field, eta0)

    root_fit = vee_fit(field, z, R)
    if root_fit.residual > fit_fraction * R:
        raise FitFailure("root ball is not vee-like "
                         f"(residual {root_fit.residual:.3g} > "
                         f"{fit_fraction:.2f} * {R:.3g})")

    def near_neck(y, rho):
        best = None
        for c in centers:
            if np.linalg.norm(c.position - y) <= 2.0 * rho:
                if best is None or c.r_star < best:
                    best = c.r_star
        return best

    def build(y, rho, level, parent_e, parent):
        fit = vee_fit(field, y, rho)
        e = fit.direction
        if parent_e is not None and float(np.dot(e, parent_e)) < 0.0:
            e = -e
        node = BallTreeNode(center=np.asarray(y, dtype=np.float64),
                            radius=rho, level=level, polarity=e,
                            kind="branching", residual=fit.residual,
                            parent=parent)
        rs = near_neck(y, rho)
        branch = (rs is not None and M * rs <= rho
                  and level < max_depth and theta * rho >= 3.0 * h)
        if not branch:
            node.kind = "regular_terminal" if rs is None else "neck_terminal"
            if node.kind == "neck_terminal" and parent_e is not None:
                # the ball meets the neck, where no vee direction exists and
                # the fitted one is noise; inherit the parent's polarity
                # (it is never used: the node only feeds the exceptional set)
                node.polarity = np.array(parent_e, dtype=np.float64)
            return node
        # children: greedy cover of the zero set in Slab(B_rho(y), e, theta^2)
        # by radius theta*rho balls centered on zero nodes near the mid-plane
        pos, _ = _zero_nodes_in_ball(field, y, rho)
        if len(pos) == 0:
            node.kind = "regular_terminal"
            return node
        axial = (pos - y) @ e
        targets = pos[np.abs(axial) <= theta ** 2 * rho]
        thin = pos[np.abs(axial) <= theta ** 4 * rho + 4.0 * h]
        if len(thin) == 0:
            thin = pos[np.abs(axial) <= theta ** 2 * rho]
        covered = np.zeros(len(targets), dtype=bool)
        child_centers = []
        for i in range(len(targets)):
            if covered[i]:
                continue
            # center on the zero node nearest the mid-plane among those
            # that still cover this target
            dist = np.linalg.norm(thin - targets[i], axis=1)
            ok = dist <= 0.9 * theta * rho
            if not np.any(ok):
                cand = targets[i]
            else:
                sub = thin[ok]
                cand = sub[int(np.argmin(np.abs((sub - y) @ e)))]
            child_centers.append(cand)
            covered |= np.linalg.norm(targets - cand, axis=1) <= theta * rho
        for c in child_centers:
            node.children.append(build(c, theta * rho, level + 1, e, node))
        return node

    return build(z, R, 0, None, None)


def tree_invariants(tree: BallTreeNode, field: ScalarField,
                    theta: float = DEFAULT_THETA) -> dict:
    """Exact checks of the structural tree invariants.

    Returns counts of branching nodes violating the child-count bound
    2^8 theta^-2, the slab-coverage property (every zero node of
    Slab(parent, e, theta^2) inside a child ball), and the polarity drift
    bound theta^3 + 0.02.
    """
    bound = 2 ** 8 / theta ** 2
    out = {"branching_nodes": 0, "child_count_violations": 0,
           "coverage_violations": 0, "polarity_violations": 0,
           "max_children": 0, "max_drift": 0.0}
    for node in tree.walk():
        for c in node.children:
            drift = float(np.linalg.norm(c.polarity - node.polarity))
            out["max_drift"] = max(out["max_drift"], drift)
            if drift > theta ** 3 + 0.02:
                out["polarity_violations"] += 1
        if not node.children:
            continue
        out["branching_nodes"] += 1
        out["max_children"] = max(out["max_children"], len(node.children))
        if len(node.children) > bound:
            out["child_count_violations"] += 1
        pos, _ = _zero_nodes_in_ball(field, node.center, node.radius)
        if len(pos):
            axial = (pos - node.center) @ node.polarity
            targets = pos[np.abs(axial) <= theta ** 2 * node.radius]
            for t in targets:
                if not any(np.linalg.norm(t - c.center) <= theta * node.radius
                           + 1e-9 for c in node.children):
                    out["coverage_violations"] += 1
                    break
    return out


# ---------------------------------------------------------------------------
# Omega+/Omega- and covering counts
# ---------------------------------------------------------------------------

def omega_pm(tree: BallTreeNode, field: ScalarField,
             theta: float = DEFAULT_THETA) -> dict:
    """Signed region masks from the tree.

    Internal balls contribute the half-slabs {+-e.(x-y) > theta^2 rho};
    regular terminals contribute their two positivity components, assigned
    by the sign of e.(x-y); neck terminals contribute their 2x inflated
    balls to the exceptional set U0.  Raises DisjointnessViolation when the
    two signed masks overlap.
    """
    from .errors import DisjointnessViolation

    coords = field.node_coords()
    omega_p = np.zeros(field.shape, dtype=bool)
    omega_m = np.zeros(field.shape, dtype=bool)
    u0 = np.zeros(field.shape, dtype=bool)
    pos_phase = field.values > field.positivity_tol()
    for node in tree.walk():
        rel = coords - node.center
        inball = np.einsum("...i,...i->...", rel, rel) <= node.radius ** 2
        axial = rel @ node.polarity
        if node.kind == "neck_terminal":
            u0 |= np.einsum("...i,...i->...", rel, rel) <= (2 * node.radius) ** 2
            continue
        if node.children:               # internal
            omega_p |= inball & (axial > theta ** 2 * node.radius)
            omega_m |= inball & (axial < -theta ** 2 * node.radius)
        else:                           # regular terminal
            mask = inball & pos_phase
            lab, nlab = ndimage.label(mask)
            for li in range(1, nlab + 1):
                comp = lab == li
                side = float(np.mean(axial[comp]))
                if side >= 0:
                    omega_p |= comp
                else:
                    omega_m |= comp
    overlap = omega_p & omega_m
    if np.any(overlap):
        cells = [tuple(int(i) for i in idx) for idx in np.argwhere(overlap)[:20]]
        raise DisjointnessViolation(cells)
    return {"omega_plus": omega_p, "omega_minus": omega_m, "u0": u0}


def omega_coverage_deficit(tree: BallTreeNode, field: ScalarField,
                           regions: dict) -> int:
    """Number of positive-phase nodes in the root ball, at distance > 2h from
    the free boundary, not covered by Omega+ / Omega- / U0."""
    coords = field.node_coords()
    rel = coords - tree.center
    inroot = np.einsum("...i,...i->...", rel, rel) <= tree.radius ** 2
    pos = field.values > field.positivity_tol()
    dist = ndimage.distance_transform_edt(pos) * field.spacing
    target = inroot & pos & (dist > 2.0 * field.spacing)
    covered = regions["omega_plus"] | regions["omega_minus"] | regions["u0"]
    return int(np.sum(target & ~covered))


def covering_count(field: ScalarField, z, R: float, zeta: float,
                   centers: Optional[Sequence[NeckCenter]] = None,
                   eta0: float = DEFAULT_ETA0) -> float:
    """N(zeta, B_R(z)) = (zeta R)^{-3} |union of B_{zeta R} over qualifying
    neck centers|, with sub-cell union volume from linear boundary ramps."""
    if field.dimension != 3:
        raise InvalidSpec("covering counts are defined for 3D fields")
    if not 0.0 < zeta < 1.0:
        raise InvalidSpec("zeta must be in (0, 1)")
    z = np.asarray(z, dtype=np.float64)
    h = field.spacing
    if zeta * R < 4.0 * h:
        raise OutOfDomain("zeta R below the 4h floor")
    if centers is None:
        centers = neck_centers(field, eta0)
    picks = [c for c in centers
             if np.linalg.norm(c.position - z) <= R and c.r_star <= zeta * R]
    if not picks:
        return 0.0
    coords = field.node_coords()
    signed = np.full(field.shape, -np.inf)
    r = zeta * R
    for c in picks:
        d = np.linalg.norm(coords - c.position, axis=-1)
        signed = np.maximum(signed, r - d)
    frac = np.clip(0.5 + signed / h, 0.0, 1.0)
    vol = float(np.sum(frac)) * h ** 3
    return vol / r ** 3


# ---------------------------------------------------------------------------
# center/scale selection
# ---------------------------------------------------------------------------

def select_center_scale(field: ScalarField, candidates, radii,
                        alpha: float = 39.0 / 50.0,
                        rho_floor: float = 1e-12) -> dict:
    """Maximize F(z, R) = E_z(u, 8R) / rho_z(u, 2R)^alpha by exhaustive scan.

    Ties break toward larger R, then lexicographically smaller center.
    Also reports the nondecreasing envelope of F_u(R) = sup_z F(z, R).
    """
    from .excess import symmetric_excess
    from .stability import rho_z

    candidates = [np.asarray(c, dtype=np.float64) for c in candidates]
    radii = sorted(float(r) for r in radii)
    if not candidates or not radii:
        raise NoCandidate("need at least one candidate center and radius")
    rows = []
    for R in radii:
        for zc in candidates:
            try:
                e_val = symmetric_excess(field, zc, 8.0 * R)["E"]
                rho = max(rho_z(field, zc, 2.0 * R), rho_floor)
            except OutOfDomain:
                continue
            rows.append({"center": zc, "R": R, "E": e_val, "rho": rho,
                         "F": e_val / rho ** alpha})
    if not rows:
        raise NoCandidate("no (center, radius) pair fits inside the grid")
    best = max(rows, key=lambda r: (r["F"], r["R"],
                                    tuple(-c for c in r["center"])))
    sup_by_r = {}
    for r in rows:
        sup_by_r[r["R"]] = max(sup_by_r.get(r["R"], -math.inf), r["F"])
    env, acc = [], -math.inf
    for R in radii:
        if R in sup_by_r:
            acc = max(acc, sup_by_r[R])
            env.append((R, acc))
    return {"center": best["center"], "R": best["R"], "F": best["F"],
            "envelope": env, "rows": rows}
