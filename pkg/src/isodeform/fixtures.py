"""Synthetic test geometries.

The puzzle piece and the eight-patch ring are *analogs*: hand-built
shapes with the same kind of features (overhanging knobs, deep concave
lobes) as the classic benchmark geometries, whose data is not public.
Run ``python -m isodeform.fixtures DIR`` to regenerate the committed
JSON files.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .bspline import TensorBasis, collocation, uniform_knots
from .geometry import BoundaryShell, Patch, identity_patch
from .io import GeometryDocument, save_geometry
from .multipatch import Interface, PatchTopology

__all__ = [
    "unit_square",
    "mild_quad",
    "concave_dent",
    "puzzle_analog",
    "ring_analog",
    "unit_cube",
    "dented_cube",
    "write_all",
]


def _curve(kv, pts) -> Patch:
    return Patch(TensorBasis((kv,)), np.asarray(pts, dtype=float))


def _interpolate(kv, f) -> np.ndarray:
    """Control points interpolating ``f`` at the Greville abscissae."""
    g = kv.greville()
    cps = np.linalg.solve(collocation(kv, g), f(g))
    ends = f(np.array([0.0, 1.0]))
    cps[0], cps[-1] = ends[0], ends[1]  # clamped ends interpolate exactly
    return cps


def unit_square() -> BoundaryShell:
    """The unit square bounded by four straight degree-1 sides."""
    return identity_patch(TensorBasis((uniform_knots(1, 2), uniform_knots(1, 2)))).boundary()


def mild_quad() -> BoundaryShell:
    """Convex quadrilateral whose sides bulge slightly outwards."""
    kv = uniform_knots(2, 6)
    corners = np.array([[0.0, 0.0], [1.2, 0.1], [0.1, 1.0], [1.1, 1.3]])

    def side(a, b, bulge):
        a, b = corners[a], corners[b]
        normal = np.array([b[1] - a[1], a[0] - b[0]])

        def f(t):
            return a + np.outer(t, b - a) + bulge * np.outer(np.sin(np.pi * t), normal)
        cps = _interpolate(kv, f)
        cps[0], cps[-1] = a, b  # exact shared corners
        return _curve(kv, cps)

    # outward normals: bottom/right take (dy, -dx), top/left the opposite sign
    return BoundaryShell({(1, 0): side(0, 1, 0.06), (1, 1): side(2, 3, -0.06),
                          (0, 0): side(0, 2, -0.06), (0, 1): side(1, 3, 0.06)})


def concave_dent(amplitude: float = 0.1, degree: int = 3, size: int = 10) -> BoundaryShell:
    """Unit square whose bottom side is pushed inwards by a smooth dent."""
    kv = uniform_knots(degree, size)
    square = identity_patch(TensorBasis((kv, kv))).boundary()
    sides = dict(square.items())
    cps = _interpolate(kv, lambda t: np.c_[t, amplitude * np.sin(np.pi * t) ** 2])
    cps[0], cps[-1] = (0.0, 0.0), (1.0, 0.0)  # sin(pi) is not exactly zero
    sides[(1, 0)] = _curve(kv, cps)
    return BoundaryShell(sides)


def _knob_polygon(depth: float, overhang: float) -> np.ndarray:
    """Twenty control points of a side from (0,0) to (1,0) with a knob below it."""
    r = 0.12 + 0.06 * overhang
    cy = -depth + r
    ang = np.linspace(np.pi * (1 - 0.25 * overhang), -np.pi * 0.25 * overhang, 8)
    head = np.c_[0.5 + r * np.cos(ang), cy - r * np.sin(ang)]
    neck = -0.06 * depth / 0.35
    return np.vstack([np.c_[np.linspace(0, 0.36, 5), np.zeros(5)], [[0.42, neck]], head,
                      [[0.58, neck]], np.c_[np.linspace(0.64, 1, 5), np.zeros(5)]])


def puzzle_analog(depth: float = 0.25, overhang: float = 0.15) -> BoundaryShell:
    """Puzzle-piece analog: unit square with two knobs out and two knobs in.

    Every side is a cubic B-spline with 20 control points. The knob heads
    overhang their necks, so the Coons patch of this boundary folds.
    """
    kv = uniform_knots(3, 20)
    knob = _knob_polygon(depth, overhang)
    e0, e1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])

    def side(origin, along, across, sign):
        return _curve(kv, origin + knob[:, :1] * along + sign * knob[:, 1:] * across)

    return BoundaryShell({
        (1, 0): side(np.zeros(2), e0, e1, 1.0),        # bottom, knob out
        (1, 1): side(e1, e0, e1, 1.0),                 # top, knob in
        (0, 0): side(np.zeros(2), e1, e0, -1.0),       # left, knob in
        (0, 1): side(e0, e1, e0, -1.0),                # right, knob out
    })


def ring_analog(amplitude: float = 0.35, lobes: int = 6, patches: int = 8,
                outer_radius: float = 2.0):
    """Eight-patch ring between a lobed inner profile and a circle.

    Returns ``(topology0, targets)``: each initial patch is the bilinear
    interpolant of its four corners, and ``targets`` holds the lobed inner
    arcs and circular outer arcs of the outer boundary.
    """
    kr, ka = uniform_knots(2, 6), uniform_knots(3, 14)
    basis = TensorBasis((kr, ka))
    gr, ga = kr.greville(), ka.greville()

    def r_inner(th):
        return 1.0 + amplitude * np.cos(lobes * th + 0.3)

    def polar(th, r):
        return np.array([r * np.cos(th), r * np.sin(th)])

    out, targets = [], {}
    t, s = np.meshgrid(gr, ga, indexing="ij")
    for k in range(patches):
        t0, t1 = 2 * np.pi * k / patches, 2 * np.pi * (k + 1) / patches
        p00, p01 = polar(t0, r_inner(t0)), polar(t1, r_inner(t1))
        p10, p11 = polar(t0, outer_radius), polar(t1, outer_radius)
        cps = (((1 - t) * (1 - s))[..., None] * p00 + ((1 - t) * s)[..., None] * p01
               + (t * (1 - s))[..., None] * p10 + (t * s)[..., None] * p11)
        out.append(Patch(basis, cps.reshape(-1, 2)))
        for face, radius in ((0, r_inner), (1, lambda th: np.full_like(th, outer_radius))):
            def arc(x, radius=radius):
                th = t0 + x * (t1 - t0)
                return np.c_[radius(th) * np.cos(th), radius(th) * np.sin(th)]
            cp = _interpolate(ka, arc)
            # share the exact corner coordinates with the initial patches
            cp[0] = out[-1].side(0, face).cps[0]
            cp[-1] = out[-1].side(0, face).cps[-1]
            targets[(k, 0, face)] = _curve(ka, cp)
    interfaces = [Interface(k, (1, 1), (k + 1) % patches, (1, 0), 0) for k in range(patches)]
    return PatchTopology(out, interfaces), targets


def unit_cube(degree: int = 2, size: int = 4) -> Patch:
    kv = uniform_knots(degree, size)
    return identity_patch(TensorBasis((kv, kv, kv)))


def dented_cube(amplitude: float = 0.15, degree: int = 2, size: int = 5) -> BoundaryShell:
    """Unit cube whose top face is pushed down by a smooth dent."""
    cube = unit_cube(degree, size)
    kv = cube.basis.kvs[0]
    g = kv.greville()
    shell = cube.boundary()
    sides = dict(shell.items())
    top = sides[(2, 1)]
    gx, gy = np.meshgrid(g, g, indexing="ij")
    dent = amplitude * (np.sin(np.pi * gx) * np.sin(np.pi * gy)) ** 2
    # sin^2 is not in the spline space, but its Greville samples vanish on the
    # face boundary, so the edges stay shared with the side faces
    cps = top.cps.copy()
    cps[:, 2] -= dent.ravel()
    sides[(2, 1)] = top.with_cps(cps)
    return BoundaryShell(sides)


def write_all(directory) -> list:
    """Write every fixture as a geometry file into ``directory``."""
    d = Path(directory)
    topo, targets = ring_analog()
    docs = {
        "unit_square.json": (unit_square(), "unit square"),
        "mild_quad.json": (mild_quad(), "convex quad with mildly curved sides"),
        "concave_dent.json": (concave_dent(), "unit square with a concave dent"),
        "puzzle_analog.json": (puzzle_analog(), "puzzle piece analog (synthetic)"),
        "dented_cube.json": (dented_cube(), "unit cube with a dented top face"),
    }
    paths = [save_geometry(obj, d / name, label=label) for name, (obj, label) in docs.items()]
    ring_doc = GeometryDocument(2, 2, topology=topo, targets=targets,
                                label="eight-patch lobed ring analog (synthetic)")
    paths.append(save_geometry(ring_doc, d / "ring_analog.json"))
    return paths


if __name__ == "__main__":
    for p in write_all(sys.argv[1] if len(sys.argv) > 1 else "."):
        print(p)
