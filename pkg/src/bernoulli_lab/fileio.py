"""File formats: FBF1 grid fields, OFF meshes, CSV tables, JSON configs.

FBF1 is a single ASCII header line

    FBF1 dim=<n> shape=<k1,...> h=<spacing> origin=<o1,...>

followed by the node values as little-endian 64-bit floats in row-major
order.  Meshes use plain ASCII OFF.  CSV output follows RFC 4180 (CRLF
records, minimal quoting) with '.' decimal points and 17 significant
digits, which round-trips float64 exactly.  Configs are single JSON
documents with a mandatory integer ``version`` field.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Optional

import numpy as np

from .errors import ConfigError
from .field import ScalarField
from .mesh import FreeBoundaryMesh

CONFIG_VERSION = 1


def fmt_float(x: float) -> str:
    """17-significant-digit decimal form; lossless for float64."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# FBF1 grid fields
# ---------------------------------------------------------------------------

def write_field(path, field: ScalarField) -> None:
    header = "FBF1 dim={} shape={} h={} origin={}\n".format(
        field.dimension,
        ",".join(str(n) for n in field.shape),
        fmt_float(field.spacing),
        ",".join(fmt_float(o) for o in field.origin))
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path, kind: str = "generic") -> ScalarField:
    """Load an FBF1 file.  The phase kind is not stored in the format and
    must be supplied by the caller (or the config) when it matters."""
    try:
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii", errors="replace").strip()
            payload = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read field file {path}: {exc}") from exc
    parts = header.split()
    if not parts or parts[0] != "FBF1":
        raise ConfigError(f"{path}: not an FBF1 file (header {header!r})")
    kv = {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ConfigError(f"{path}: malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    try:
        dim = int(kv["dim"])
        shape = tuple(int(s) for s in kv["shape"].split(","))
        h = float(kv["h"])
        origin = np.array([float(s) for s in kv["origin"].split(",")])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed FBF1 header: {exc}") from exc
    if len(shape) != dim or len(origin) != dim:
        raise ConfigError(f"{path}: header dim does not match shape/origin")
    count = int(np.prod(shape))
    values = np.frombuffer(payload, dtype="<f8", count=-1)
    if len(values) != count:
        raise ConfigError(f"{path}: expected {count} values, found {len(values)}")
    return ScalarField(values.reshape(shape).astype(np.float64), h, origin,
                       kind=kind)


# ---------------------------------------------------------------------------
# OFF meshes
# ---------------------------------------------------------------------------

def write_mesh(path, mesh: FreeBoundaryMesh,
               vertex_scalars: Optional[dict] = None) -> None:
    """ASCII OFF export; optional per-vertex scalar columns are appended to
    each vertex line after the coordinates (a common OFF extension) and
    their names recorded in a leading comment."""
    v = mesh.vertices
    e = mesh.elements
    cols = []
    names = []
    if vertex_scalars:
        for name in sorted(vertex_scalars):
            arr = np.asarray(vertex_scalars[name], dtype=np.float64)
            if arr.shape != (len(v),):
                raise ConfigError(f"vertex scalar {name!r} has wrong length")
            names.append(name)
            cols.append(arr)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("OFF\n")
        if names:
            fh.write("# vertex_scalars: " + " ".join(names) + "\n")
        fh.write(f"{len(v)} {len(e)} 0\n")
        for i in range(len(v)):
            row = [fmt_float(x) for x in v[i]]
            row += [fmt_float(c[i]) for c in cols]
            fh.write(" ".join(row) + "\n")
        for el in e:
            fh.write(str(len(el)) + " " + " ".join(str(int(i)) for i in el)
                     + "\n")


def read_mesh(path) -> dict:
    """Parse an OFF file written by write_mesh.

    Returns {"vertices", "elements", "scalars"}; geometry only, so the
    curvature fields of FreeBoundaryMesh are not reconstructed.
    """
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read mesh file {path}: {exc}") from exc
    if not lines or lines[0].strip() != "OFF":
        raise ConfigError(f"{path}: not an OFF file")
    names = []
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        if "vertex_scalars:" in lines[k]:
            names = lines[k].split("vertex_scalars:")[1].split()
        k += 1
    try:
        nv, ne, _ = (int(t) for t in lines[k].split())
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed OFF count line") from exc
    rows = [list(map(float, lines[k + 1 + i].split())) for i in range(nv)]
    width = len(rows[0]) if rows else 0
    dim = width - len(names)
    verts = np.array([r[:dim] for r in rows])
    scalars = {name: np.array([r[dim + j] for r in rows])
               for j, name in enumerate(names)}
    elems = []
    for i in range(ne):
        toks = lines[k + 1 + nv + i].split()
        elems.append([int(t) for t in toks[1:1 + int(toks[0])]])
    return {"vertices": verts, "elements": np.array(elems, dtype=np.intp),
            "scalars": scalars}


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return fmt_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    """RFC 4180 CSV: CRLF records, minimal quoting, lossless floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n",
                        quoting=csv.QUOTE_MINIMAL)
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([format_cell(c) for c in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """(header, rows) with numeric cells parsed back to float."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        table = list(reader)
    if not table:
        raise ConfigError(f"{path}: empty CSV")
    header, raw = table[0], table[1:]

    def parse(cell):
        try:
            return float(cell)
        except ValueError:
            return cell

    return header, [[parse(c) for c in row] for row in raw]


# ---------------------------------------------------------------------------
# JSON configs and reports
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "version" not in cfg:
        raise ConfigError(f"{path}: config is missing the 'version' field")
    if int(cfg["version"]) != CONFIG_VERSION:
        raise ConfigError(
            f"{path}: unsupported config version {cfg['version']!r}")
    return cfg


def dump_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.bool_,)):
            return bool(o)
        raise TypeError(f"not JSON serializable: {type(o)}")

    text = json.dumps(obj, indent=2, sort_keys=True, default=default,
                      allow_nan=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
