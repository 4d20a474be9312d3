"""Geometry files and mesh export.

Geometry files are JSON documents with a fixed key order. Floats are
written with 17 significant digits so that a load/save cycle reproduces
control points bit for bit and re-saving a canonical file is a no-op.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bspline import KnotVector, TensorBasis
from .errors import GeometryFileError, IsodeformError
from .geometry import BoundaryShell, Patch, det_grid
from .multipatch import Interface, PatchTopology

__all__ = [
    "FORMAT",
    "GeometryDocument",
    "load_geometry",
    "read_document",
    "save_geometry",
    "dumps_document",
    "atomic_write",
    "export_mesh",
    "read_structured_grid",
    "lattice_axes",
]

FORMAT = "isodeform-geometry"
VERSION = 1


@dataclass
class GeometryDocument:
    """Everything a geometry file can hold.

    Exactly one of ``shell`` and ``topology`` is set. ``initial`` is an
    optional initial domain paired with a shell; ``targets`` maps
    ``(patch, direction, face)`` to target sides of a topology's outer
    boundary.
    """

    dim: int
    phys_dim: int
    shell: BoundaryShell | None = None
    topology: PatchTopology | None = None
    initial: Patch | None = None
    targets: dict = field(default_factory=dict)
    label: str = ""

    @property
    def primary(self):
        return self.shell if self.shell is not None else self.topology


# --- writing ------------------------------------------------------------------

def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise GeometryFileError(f"cannot serialise non-finite value {x!r}")
    s = "%.17g" % x
    return "0" if s == "-0" else s


def _row(values) -> str:
    return "[" + ", ".join(_num(v) for v in values) + "]"


def _spline_block(indent: str, head: list, patch: Patch) -> list:
    kvs = patch.basis.kvs
    lines = [indent + "{"]
    for key, val in head:
        lines.append(f"{indent}  {json.dumps(key)}: {json.dumps(val)},")
    lines.append(f"{indent}  \"degree\": {json.dumps([kv.degree for kv in kvs])},")
    lines.append(f"{indent}  \"knots\": [")
    lines += [f"{indent}    {_row(kv.array)}" + ("," if i < len(kvs) - 1 else "")
              for i, kv in enumerate(kvs)]
    lines.append(f"{indent}  ],")
    lines.append(f"{indent}  \"points\": [")
    lines += [f"{indent}    {_row(p)}" + ("," if i < len(patch.cps) - 1 else "")
              for i, p in enumerate(patch.cps)]
    lines.append(f"{indent}  ]")
    lines.append(indent + "}")
    return lines


def _list_block(key: str, blocks: list) -> list:
    lines = [f"  {json.dumps(key)}: ["]
    for i, b in enumerate(blocks):
        if i < len(blocks) - 1:
            b = b[:-1] + [b[-1] + ","]
        lines += b
    lines.append("  ]")
    return lines


def dumps_document(doc: GeometryDocument) -> str:
    """Canonical text of a geometry document."""
    kind = "shell" if doc.shell is not None else "patches"
    sections = [[f"  \"format\": {json.dumps(FORMAT)}"], [f"  \"version\": {VERSION}"],
                [f"  \"label\": {json.dumps(doc.label)}"], [f"  \"kind\": \"{kind}\""],
                [f"  \"dim\": {doc.dim}"], [f"  \"phys_dim\": {doc.phys_dim}"]]
    if doc.shell is not None:
        blocks = [_spline_block("    ", [("side", list(key))], side)
                  for key, side in sorted(doc.shell.items())]
        sections.append(_list_block("sides", blocks))
        if doc.initial is not None:
            blk = _spline_block("  ", [], doc.initial)
            blk[0] = "  \"initial\": {"
            sections.append(blk)
    else:
        topo = doc.topology
        sections.append(_list_block("patches", [_spline_block("    ", [], p) for p in topo.patches]))
        itf = [f"    {{\"a\": {i.a}, \"side_a\": {json.dumps(list(i.side_a))}, \"b\": {i.b}, "
               f"\"side_b\": {json.dumps(list(i.side_b))}, \"orientation\": {i.orientation}}}"
               for i in topo.interfaces]
        sections.append(["  \"interfaces\": ["] + [s + ("," if k < len(itf) - 1 else "")
                                                   for k, s in enumerate(itf)] + ["  ]"])
        if doc.targets:
            blocks = [_spline_block("    ", [("patch", k), ("side", [j, f])], side)
                      for (k, j, f), side in sorted(doc.targets.items())]
            sections.append(_list_block("targets", blocks))
    out = ["{"]
    for i, sec in enumerate(sections):
        if i < len(sections) - 1:
            sec = sec[:-1] + [sec[-1] + ","]
        out += sec
    out.append("}")
    return "\n".join(out) + "\n"


def atomic_write(path, data, mode: str = "w") -> Path:
    """Write ``data`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_geometry(obj, path, label: str = "") -> Path:
    """Save a shell, patch, topology or :class:`GeometryDocument`."""
    if isinstance(obj, GeometryDocument):
        doc = obj
    elif isinstance(obj, BoundaryShell):
        doc = GeometryDocument(obj.dim, obj.phys_dim, shell=obj, label=label)
    elif isinstance(obj, PatchTopology):
        doc = GeometryDocument(obj.dim, obj.phys_dim, topology=obj, label=label)
    elif isinstance(obj, Patch):
        doc = GeometryDocument(obj.dim, obj.phys_dim, topology=PatchTopology([obj]), label=label)
    else:
        raise TypeError(f"cannot save {type(obj).__name__}")
    return atomic_write(path, dumps_document(doc))


# --- reading ------------------------------------------------------------------

def _fail(path, where, msg):
    raise GeometryFileError(f"{path}: {where}: {msg}")


def _get(obj, key, where, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        _fail(path, where, f"missing field {key!r}")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        _fail(path, f"{where}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return val


def _parse_spline(rec, where, path, dim, phys_dim) -> Patch:
    degree = _get(rec, "degree", where, path, list)
    knots = _get(rec, "knots", where, path, list)
    points = _get(rec, "points", where, path, list)
    if len(degree) != dim or len(knots) != dim:
        _fail(path, where, f"expected {dim} degree/knot entries, got {len(degree)}/{len(knots)}")
    kvs = []
    for k, (p, t) in enumerate(zip(degree, knots)):
        try:
            kvs.append(KnotVector(int(p), np.asarray(t, dtype=float)))
        except (IsodeformError, ValueError, TypeError) as exc:
            _fail(path, f"{where}.knots[{k}]", str(exc))
    basis = TensorBasis(tuple(kvs))
    try:
        cps = np.asarray(points, dtype=float)
    except (ValueError, TypeError):
        _fail(path, f"{where}.points", "control points must be numeric rows")
    if cps.shape != (basis.size, phys_dim):
        _fail(path, f"{where}.points",
              f"expected {basis.size} points of dimension {phys_dim}, got shape {cps.shape}")
    if not np.all(np.isfinite(cps)):
        _fail(path, f"{where}.points", "non-finite coordinate")
    return Patch(basis, cps)


def read_document(path) -> GeometryDocument:
    """Parse and validate a geometry file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise GeometryFileError(f"{path}: cannot read file: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeometryFileError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if _get(raw, "format", "header", path) != FORMAT:
        _fail(path, "format", f"expected {FORMAT!r}")
    if _get(raw, "version", "header", path) != VERSION:
        _fail(path, "version", f"unsupported version {raw['version']!r}")
    dim = _get(raw, "dim", "header", path, int)
    phys_dim = _get(raw, "phys_dim", "header", path, int)
    if dim not in (2, 3) or phys_dim not in (2, 3):
        _fail(path, "dim", "dimensions must be 2 or 3")
    kind = _get(raw, "kind", "header", path, str)
    doc = GeometryDocument(dim, phys_dim, label=str(raw.get("label", "")))
    try:
        if kind == "shell":
            sides = {}
            for i, rec in enumerate(_get(raw, "sides", "body", path, list)):
                where = f"sides[{i}]"
                key = tuple(_get(rec, "side", where, path, list))
                if len(key) != 2 or key in sides:
                    _fail(path, f"{where}.side", f"bad or repeated side {list(key)}")
                sides[key] = _parse_spline(rec, where, path, dim - 1, phys_dim)
            try:
                doc.shell = BoundaryShell(sides)
                doc.shell.check_compatible()
            except IsodeformError as exc:
                _fail(path, "sides", str(exc))
            if "initial" in raw:
                doc.initial = _parse_spline(raw["initial"], "initial", path, dim, phys_dim)
        elif kind == "patches":
            patches = [_parse_spline(rec, f"patches[{i}]", path, dim, phys_dim)
                       for i, rec in enumerate(_get(raw, "patches", "body", path, list))]
            interfaces = []
            for i, rec in enumerate(raw.get("interfaces", [])):
                where = f"interfaces[{i}]"
                try:
                    interfaces.append(Interface(int(_get(rec, "a", where, path)),
                                                tuple(_get(rec, "side_a", where, path)),
                                                int(_get(rec, "b", where, path)),
                                                tuple(_get(rec, "side_b", where, path)),
                                                int(rec.get("orientation", 0))))
                except (IsodeformError, TypeError, ValueError, IndexError) as exc:
                    _fail(path, where, str(exc))
            try:
                doc.topology = PatchTopology(patches, interfaces)
                for itf in doc.topology.interfaces:
                    doc.topology.matched_pairs(itf)
            except IsodeformError as exc:
                _fail(path, "interfaces", str(exc))
            for i, rec in enumerate(raw.get("targets", [])):
                where = f"targets[{i}]"
                k = int(_get(rec, "patch", where, path))
                j, f = _get(rec, "side", where, path, list)
                doc.targets[(k, int(j), int(f))] = _parse_spline(rec, where, path, dim - 1, phys_dim)
        else:
            _fail(path, "kind", f"unknown kind {kind!r}; use 'shell' or 'patches'")
    except GeometryFileError:
        raise
    except IsodeformError as exc:
        raise GeometryFileError(f"{path}: {exc}") from exc
    return doc


def load_geometry(path):
    """Load a file and return its :class:`BoundaryShell` or :class:`PatchTopology`."""
    return read_document(path).primary


# --- mesh export --------------------------------------------------------------

def lattice_axes(patch: Patch, density: int):
    """Uniform parametric lattice with ``density`` intervals per knot span."""
    return [np.linspace(0.0, 1.0, density * kv.num_spans + 1) for kv in patch.basis.kvs]


def _vtk_text(patch: Patch, density: int) -> str:
    axes = lattice_axes(patch, density)
    pts = patch.grid_eval(axes)
    det = det_grid(patch, axes) if patch.dim == patch.phys_dim else np.zeros(pts.shape[:-1])
    # VTK orders points with the first index fastest
    order = tuple(range(patch.dim))[::-1]
    pts = np.transpose(pts, order + (patch.dim,)).reshape(-1, patch.phys_dim)
    det = np.transpose(det, order).ravel()
    if patch.phys_dim == 2:
        pts = np.c_[pts, np.zeros(len(pts))]
    dims = [len(a) for a in axes] + [1] * (3 - patch.dim)
    lines = ["# vtk DataFile Version 3.0", "isodeform patch samples", "ASCII",
             "DATASET STRUCTURED_GRID", "DIMENSIONS " + " ".join(map(str, dims)),
             f"POINTS {len(pts)} double"]
    lines += [" ".join(_num(v) for v in row) for row in pts]
    lines += [f"POINT_DATA {len(pts)}", "SCALARS detJ double 1", "LOOKUP_TABLE default"]
    lines += [_num(v) for v in det]
    return "\n".join(lines) + "\n"


def read_structured_grid(path):
    """Read back a structured-grid file: ``(dims, points, detJ)``."""
    tokens = Path(path).read_text().split("\n")
    dims = points = det = None
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("DIMENSIONS"):
            dims = tuple(int(v) for v in line.split()[1:])
        elif line.startswith("POINTS"):
            n = int(line.split()[1])
            points = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("LOOKUP_TABLE"):
            n = len(points)
            det = np.array([float(tokens[i + 1 + k]) for k in range(n)])
            i += n
        i += 1
    if dims is None or points is None or det is None:
        raise GeometryFileError(f"{path}: not a structured-grid file")
    return dims, points, det


def _isoline(patch: Patch, direction: int, value: float, rel_tol: float, scale: float):
    """Polyline of the curve ``xi_direction = value`` within ``rel_tol * scale``."""
    kv = patch.basis.kvs[1 - direction]
    ts = list(np.linspace(0.0, 1.0, 4 * kv.num_spans + 1))

    def point(t):
        xi = [0.0, 0.0]
        xi[direction], xi[1 - direction] = value, t
        return xi

    def evaluate(ts):
        return patch.evaluate(np.array([point(t) for t in ts]))

    pts = evaluate(ts)
    tol = rel_tol * scale
    for _ in range(30):
        mids = [(a + b) / 2 for a, b in zip(ts[:-1], ts[1:])]
        mp = evaluate(mids)
        dev = np.linalg.norm(mp - (pts[:-1] + pts[1:]) / 2, axis=1)
        bad = np.flatnonzero(dev > tol)
        if bad.size == 0:
            break
        for k in bad[::-1]:
            ts.insert(k + 1, mids[k])
            pts = np.insert(pts, k + 1, mp[k], axis=0)
    return pts


def _svg_text(patches, rel_tol: float = 1e-3) -> str:
    allpts = np.vstack([p.cps for p in patches])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    scale = float(np.linalg.norm(hi - lo)) or 1.0
    size = 800.0
    s = size / max(hi - lo)
    pad = 10.0

    def tr(p):
        return pad + (p[:, 0] - lo[0]) * s, pad + (hi[1] - p[:, 1]) * s

    w = pad * 2 + (hi[0] - lo[0]) * s
    h = pad * 2 + (hi[1] - lo[1]) * s
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}">']
    for patch in patches:
        for direction in (0, 1):
            for value in patch.basis.kvs[direction].mesh:
                poly = _isoline(patch, direction, float(value), rel_tol, scale)
                x, y = tr(poly)
                coords = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))
                edge = value in (0.0, 1.0)
                out.append(f'<polyline fill="none" stroke="{"black" if edge else "#3060c0"}" '
                           f'stroke-width="{1.5 if edge else 0.7}" points="{coords}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_mesh(obj, path, density: int = 4, fmt: str = "structured-grid") -> list:
    """Write samples of a patch or every patch of a topology.

    ``fmt="structured-grid"`` writes one legacy VTK file per patch with a
    ``detJ`` point field; ``fmt="isolines-svg"`` draws the knot lines of
    2D patches into a single SVG file. Returns the written paths.
    """
    patches = obj.patches if isinstance(obj, PatchTopology) else [obj]
    path = Path(path)
    if fmt == "structured-grid":
        if len(patches) == 1:
            return [atomic_write(path, _vtk_text(patches[0], density))]
        return [atomic_write(path.with_name(f"{path.stem}_{k}{path.suffix}"), _vtk_text(p, density))
                for k, p in enumerate(patches)]
    if fmt == "isolines-svg":
        if any(p.dim != 2 or p.phys_dim != 2 for p in patches):
            raise ValueError("isoline plots are only available for planar 2D patches")
        return [atomic_write(path, _svg_text(patches))]
    raise ValueError(f"unknown export format {fmt!r}")
