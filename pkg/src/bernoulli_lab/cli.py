"""Command-line front end: configuration, orchestration, report emission.

Every subcommand reads a single JSON config (``--config``), writes its
artifacts under ``--out``, and exits 0 when all executed checks pass, 1 when
a check fails, and 2 on configuration errors.  All outputs are deterministic
for a fixed config and seed: reductions run in fixed index order and floats
are serialized at full precision.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from . import fileio
from .errors import BernoulliLabError, ConfigError
from .exact import ExactSpec, realize
from .field import ScalarField

#: physical radii in classify_regions are stated at unit domain scale; the
#: config's `rescale` factor maps them to the actual domain size
UNIT_SCALE_PROBE_RADIUS = 2.0
UNIT_SCALE_FB_CUTOFF = 8.0


def _fail_config(message: str):
    click.echo(f"config error: {message}", err=True)
    sys.exit(2)


def _load_config(path, seed=None):
    if path is None:
        cfg = {"version": fileio.CONFIG_VERSION}
    else:
        cfg = fileio.load_config(path)
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg.setdefault("seed", 0)
    return cfg


def _limit_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ[var] = str(int(n))
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=int(n))
    except ImportError:
        pass


def _build_boundary_data(spec: dict):
    """Boundary data callables for the solver, from a declarative record.

    kinds: affine_plus -> (e.x - b)_+ ; clip_affine -> clip(e.x - b, -1, 1);
    constant -> c.
    """
    kind = spec.get("kind")
    if kind == "affine_plus":
        e = np.asarray(spec["e"], dtype=np.float64)
        b = float(spec.get("b", 0.0))
        return lambda p: np.maximum(p @ e - b, 0.0)
    if kind == "clip_affine":
        e = np.asarray(spec["e"], dtype=np.float64)
        b = float(spec.get("b", 0.0))
        return lambda p: np.clip(p @ e - b, -1.0, 1.0)
    if kind == "constant":
        c = float(spec["value"])
        return lambda p: np.full(len(p), c)
    raise ConfigError(f"unknown boundary data kind {kind!r}")


def load_field(cfg: dict) -> ScalarField:
    """Realize the field named by the config: a file, an exact spec, or a
    freshly solved instance."""
    src = cfg.get("field")
    if not isinstance(src, dict):
        raise ConfigError("config needs a 'field' object")
    if "file" in src:
        path = src["file"]
        if not os.path.exists(path):
            raise ConfigError(f"field file not found: {path}")
        return fileio.read_field(path, kind=src.get("kind", "generic"))
    if "exact" in src:
        ex = src["exact"]
        spec = ExactSpec.from_json(ex)
        try:
            return realize(spec, tuple(ex["shape"]), float(ex["h"]),
                           ex["origin"])
        except KeyError as exc:
            raise ConfigError(f"exact field spec missing {exc}") from exc
    if "solver" in src:
        from .solver import solve_bernoulli, solve_fbac
        sv = src["solver"]
        try:
            bdata = _build_boundary_data(sv["data"])
            args = (bdata, tuple(sv["shape"]), float(sv["h"]), sv["origin"])
        except KeyError as exc:
            raise ConfigError(f"solver spec missing {exc}") from exc
        solve = solve_fbac if sv.get("problem") == "allen_cahn" \
            else solve_bernoulli
        field, report = solve(*args)
        cfg["_solver_report"] = report
        return field
    raise ConfigError("'field' must contain 'file', 'exact', or 'solver'")


def _out_dir(out):
    os.makedirs(out, exist_ok=True)
    return out


@click.group()
def main():
    """Numerical laboratory for one-phase Bernoulli and free-boundary
    Allen-Cahn fields."""


_config_opt = click.option("--config", "config_path", type=click.Path(),
                           default=None, help="JSON config file.")
_out_opt = click.option("--out", default="out", show_default=True,
                        help="Output directory.")
_seed_opt = click.option("--seed", type=int, default=None,
                         help="Override the config seed.")
_threads_opt = click.option("--threads", type=int, default=None,
                            help="Worker/BLAS thread cap.")


def _common(f):
    for opt in (_threads_opt, _seed_opt, _out_opt, _config_opt):
        f = opt(f)
    return f


def _start(config_path, seed, threads):
    _limit_threads(threads)
    try:
        return _load_config(config_path, seed)
    except ConfigError as exc:
        _fail_config(str(exc))


@main.command()
@_common
def solve(config_path, out, seed, threads):
    """Solve the configured instance; write the field (FBF1) + JSON report."""
    cfg = _start(config_path, seed, threads)
    try:
        if "solver" not in cfg.get("field", {}):
            raise ConfigError("solve needs a field.solver spec")
        field = load_field(cfg)
        from .solver import residual_report
        report = dict(cfg.pop("_solver_report", {}))
        report["residuals"] = residual_report(field)
        out = _out_dir(out)
        fileio.write_field(os.path.join(out, "field.fbf"), field)
        fileio.dump_json(os.path.join(out, "solve_report.json"), report)
    except ConfigError as exc:
        _fail_config(str(exc))
    except BernoulliLabError as exc:
        click.echo(f"solve failed: {exc}", err=True)
        sys.exit(1)
    click.echo(os.path.join(out, "field.fbf"))


@main.command()
@_common
def diagnose(config_path, out, seed, threads):
    """Monotonicity and stability sweeps for the configured field -> CSV."""
    from . import monotonicity as mono
    from . import stability as stab

    cfg = _start(config_path, seed, threads)
    try:
        field = load_field(cfg)
        d = cfg.get("diagnose", {})
        center = d.get("center")
        if center is None:
            raise ConfigError("diagnose needs a diagnose.center")
        radii = d.get("radii")
        if not radii:
            raise ConfigError("diagnose needs a diagnose.radii list")
        quantities = d.get("quantities", ["W", "dW_rhs"])
        e = d.get("direction")
        series = mono.sweep(field, center, radii, quantities, e=e)
    except ConfigError as exc:
        _fail_config(str(exc))
    except BernoulliLabError as exc:
        click.echo(f"diagnose failed: {exc}", err=True)
        sys.exit(1)
    out = _out_dir(out)
    rows = series.rows()
    header = list(rows[0].keys())
    fileio.write_csv(os.path.join(out, "diagnose.csv"), header,
                     [[r[k] for k in header] for r in rows])
    checks = []
    tol_key = "tolerances.weiss_decrease_cells"
    tol = cfg.get("tolerances", {}).get("weiss_decrease_cells", 5.0)
    if "W" in series.values:
        viol = series.monotonicity_violations("W", tol * field.spacing)
        checks.append(["weiss_nondecreasing", viol, tol * field.spacing,
                       tol_key, viol == 0])
    if field.kind == "allen_cahn":
        m = stab.modica_check(field)["max"]
        mtol = cfg.get("tolerances", {}).get("modica_solved_max", 0.05)
        checks.append(["modica_max", m, mtol, "tolerances.modica_solved_max",
                       m <= mtol])
    fileio.write_csv(os.path.join(out, "diagnose_checks.csv"),
                     ["check", "value", "tolerance", "tolerance_key",
                      "passed"], checks)
    click.echo(os.path.join(out, "diagnose.csv"))
    if not all(c[-1] for c in checks):
        sys.exit(1)


@main.command()
@_common
def necks(config_path, out, seed, threads):
    """Neck centers (CSV) and the polarity ball tree (JSON)."""
    from . import neck as neck_mod

    cfg = _start(config_path, seed, threads)
    try:
        field = load_field(cfg)
        nk = cfg.get("necks", {})
        eta0 = float(nk.get("eta0", neck_mod.DEFAULT_ETA0))
        centers = neck_mod.neck_centers(field, eta0)
        tree_rec = None
        inv = None
        if "tree_center" in nk:
            tree = neck_mod.ball_tree(
                field, nk["tree_center"], float(nk["tree_radius"]),
                theta=float(nk.get("theta", neck_mod.DEFAULT_THETA)),
                M=float(nk.get("M", neck_mod.DEFAULT_M)), eta0=eta0)
            inv = neck_mod.tree_invariants(
                tree, field, theta=float(nk.get("theta",
                                                neck_mod.DEFAULT_THETA)))

            def node_json(node):
                return {"center": list(node.center),
                        "radius": node.radius, "level": node.level,
                        "kind": node.kind, "residual": node.residual,
                        "polarity": list(node.polarity),
                        "children": [node_json(c) for c in node.children]}
            tree_rec = node_json(tree)
    except ConfigError as exc:
        _fail_config(str(exc))
    except BernoulliLabError as exc:
        click.echo(f"necks failed: {exc}", err=True)
        sys.exit(1)
    out = _out_dir(out)
    dim = field.dimension
    header = [f"x{a}" for a in range(dim)] + ["r_star", "dyadic_class"]
    fileio.write_csv(os.path.join(out, "neck_centers.csv"), header,
                     [list(c.position) + [c.r_star, c.dyadic_class]
                      for c in centers])
    if tree_rec is not None:
        fileio.dump_json(os.path.join(out, "ball_tree.json"),
                         {"tree": tree_rec, "invariants": inv,
                          "tolerance_key": "necks.theta"})
    click.echo(os.path.join(out, "neck_centers.csv"))
    if inv is not None and (inv["child_count_violations"]
                            or inv["coverage_violations"]
                            or inv["polarity_violations"]):
        sys.exit(1)


@main.command()
@_common
def excess(config_path, out, seed, threads):
    """Excess decay sweep -> CSV (radius, E, A, rho, N, max_rstar)."""
    from . import excess as excess_mod

    cfg = _start(config_path, seed, threads)
    try:
        field = load_field(cfg)
        ex = cfg.get("excess", {})
        center = ex.get("center")
        radii = ex.get("radii")
        if center is None or not radii:
            raise ConfigError("excess needs excess.center and excess.radii")
        series = excess_mod.excess_sweep(
            field, center, radii,
            eta0=float(ex.get("eta0", 0.1)),
            zeta=float(ex.get("zeta", 0.25)))
    except ConfigError as exc:
        _fail_config(str(exc))
    except BernoulliLabError as exc:
        click.echo(f"excess failed: {exc}", err=True)
        sys.exit(1)
    out = _out_dir(out)
    names = ["E", "A", "rho", "N", "max_rstar"]
    rows = [[float(r)] + [float(series.values[n][i]) for n in names]
            for i, r in enumerate(series.radii)]
    fileio.write_csv(os.path.join(out, "excess_sweep.csv"),
                     ["radius"] + names, rows)
    fileio.dump_json(os.path.join(out, "excess_derivatives.json"),
                     {k: list(np.asarray(v, dtype=np.float64))
                      for k, v in series.derivatives.items()})
    click.echo(os.path.join(out, "excess_sweep.csv"))


@main.command()
@_common
def surface(config_path, out, seed, threads):
    """Level-set meshes, intrinsic distance, and curvature reports."""
    from .mesh import extract_free_boundary, extract_level_set
    from . import surface as surf

    cfg = _start(config_path, seed, threads)
    try:
        field = load_field(cfg)
        sc = cfg.get("surface", {})
        rescale = float(cfg.get("rescale", 1.0))
        level = sc.get("level")
        mesh = extract_free_boundary(field) if level is None \
            else extract_level_set(field, float(level))
        report = {"vertices": len(mesh.vertices),
                  "elements": len(mesh.elements),
                  "area": mesh.total_measure()}
        scalars = {"mean_curvature": mesh.mean_curvature}
        if field.kind == "allen_cahn" and "delta" in sc:
            part = surf.classify_regions(
                field, float(sc["delta"]),
                probe_radius=float(sc.get("probe_radius",
                                          UNIT_SCALE_PROBE_RADIUS * rescale)),
                cutoff=float(sc.get("cutoff", UNIT_SCALE_FB_CUTOFF * rescale)))
            report["x_cells"] = int(part.x_set.sum())
            report["g_cells"] = int(part.g_set.sum())
            report["w_cells"] = int(part.w_set.sum())
            if "annulus_lambda" in sc:
                ann = surf.find_clean_annulus(part,
                                              float(sc["annulus_lambda"]))
                report["clean_annulus"] = {
                    "center": None if ann["center"] is None
                    else list(ann["center"]),
                    "radius": ann["radius"], "reason": ann.get("reason")}
        if "seed_point" in sc and mesh.elements.shape[1] == 3:
            seed_pt = np.asarray(sc["seed_point"], dtype=np.float64)
            d0 = np.linalg.norm(mesh.vertices - seed_pt, axis=1)
            smask = d0 <= d0.min() + 1e-12
            df = surf.intrinsic_distance(mesh, smask)
            scalars["distance"] = np.where(np.isfinite(df.distance),
                                           df.distance, -1.0)
            scalars["gauss_curvature"] = surf.gauss_curvature(mesh)["K"]
            report["lipschitz_ok"] = bool(df.check_lipschitz())
            if "gb_radii" in sc:
                r1, r2 = (float(x) for x in sc["gb_radii"])
                gb = surf.gauss_bonnet_check(df, r1, r2)
                gb["tolerance_key"] = "tolerances.gb_slack_rel"
                report["gauss_bonnet"] = gb
    except ConfigError as exc:
        _fail_config(str(exc))
    except BernoulliLabError as exc:
        click.echo(f"surface failed: {exc}", err=True)
        sys.exit(1)
    out = _out_dir(out)
    fileio.write_mesh(os.path.join(out, "surface.off"), mesh, scalars)
    fileio.dump_json(os.path.join(out, "surface_report.json"), report)
    click.echo(os.path.join(out, "surface.off"))
    gb = report.get("gauss_bonnet")
    if gb is not None and gb["slack"] < -0.05 * gb["lhs"]:
        sys.exit(1)


@main.command()
@_common
def verify(config_path, out, seed, threads):
    """Full verification suite against the closed-form oracles."""
    from .verify import run_acceptance

    cfg = _start(config_path, seed, threads)
    try:
        result = run_acceptance(cfg)
    except BernoulliLabError as exc:
        click.echo(f"verify failed: {exc}", err=True)
        sys.exit(1)
    out = _out_dir(out)
    fileio.dump_json(os.path.join(out, "verify.json"), result)
    for r in result["records"]:
        status = "PASS" if r["passed"] else "FAIL"
        click.echo(f"criterion {r['criterion']:>2} {r['name']:<24} {status} "
                   f"({r['seconds']:.1f}s, tolerance {r['tolerance_key']})")
    click.echo(f"suite: {'PASS' if result['passed'] else 'FAIL'} "
               f"(2d {result['seconds_2d']:.0f}s, "
               f"total {result['seconds_total']:.0f}s)")
    sys.exit(0 if result["passed"] else 1)


if __name__ == "__main__":
    main()
