"""Boundary simplification by constrained L2 projection onto coarse bases.

A side of the target boundary is projected onto a coarse spline space
with its own boundary pinned, then written back on the original basis.
The simplified sides are filled with a Coons patch to give the initial
domain of the deformation.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .bspline import KnotVector, TensorBasis, collocation, refine_to, span_quadrature, uniform_knots
from .errors import DomainError, IncompatibleSpaceError, InitialDomainError
from .geometry import (BoundaryShell, Patch, _tensor_apply, check_bijective, coons_patch,
                       quality)

__all__ = [
    "CoarseSpec",
    "simplify_side",
    "reexpress",
    "build_initial_domain",
    "l2_distance",
    "chord_simplification",
]


@dataclass(frozen=True)
class CoarseSpec:
    """Degree and number of basis functions of a coarse uniform basis."""

    degree: int
    num_basis: int | None = None

    def __post_init__(self):
        q = int(self.degree)
        m = q + 1 if self.num_basis is None else int(self.num_basis)
        if q < 1:
            raise DomainError(f"coarse degree must be at least 1, got {q}")
        if m < q + 1:
            raise DomainError(f"coarse basis needs at least {q + 1} functions, got {m}")
        object.__setattr__(self, "degree", q)
        object.__setattr__(self, "num_basis", m)

    def knot_vector(self) -> KnotVector:
        return uniform_knots(self.degree, self.num_basis)


def _union_quadrature(kv_a: KnotVector, kv_b: KnotVector):
    breaks = np.union1d(kv_a.mesh, kv_b.mesh)
    n = max(kv_a.degree, kv_b.degree) + 1
    pts, wts = span_quadrature(kv_a, n, breaks=breaks)
    return pts.ravel(), wts.ravel()


def _mixed_mass(kv_test: KnotVector, kv_trial: KnotVector) -> np.ndarray:
    x, w = _union_quadrature(kv_test, kv_trial)
    return collocation(kv_test, x).T @ (w[:, None] * collocation(kv_trial, x))


def _ring_mask(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for k in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[k] = 0
        mask[tuple(sl)] = True
        sl[k] = -1
        mask[tuple(sl)] = True
    return mask


def _constrained_projection(source: Patch, kvs: Sequence[KnotVector], pinned: np.ndarray) -> Patch:
    """L2 projection of ``source`` onto ``kvs`` with the boundary ring pinned.

    ``pinned`` is a full coefficient grid of the target space whose ring
    entries are used; interior entries are ignored.
    """
    shape = tuple(kv.n for kv in kvs)
    dphys = source.phys_dim
    M1 = [_mixed_mass(kv, kv) for kv in kvs]
    Mx = [_mixed_mass(kv, skv) for kv, skv in zip(kvs, source.basis.kvs)]
    rhs = _tensor_apply(Mx, source.grid).reshape(-1, dphys)
    M = M1[0]
    for m in M1[1:]:
        M = np.kron(M, m)
    ring = _ring_mask(shape).ravel()
    x = np.asarray(pinned, dtype=float).reshape(-1, dphys).copy()
    inner = ~ring
    if inner.any():
        A = M[np.ix_(inner, inner)]
        b = rhs[inner] - M[np.ix_(inner, ring)] @ x[ring]
        x[inner] = np.linalg.solve(A, b)
    return Patch(TensorBasis(tuple(kvs)), x)


def _normalize_specs(spec, n_dirs: int) -> tuple:
    if isinstance(spec, CoarseSpec):
        return (spec,) * n_dirs
    spec = tuple(spec)
    if len(spec) != n_dirs or not all(isinstance(s, CoarseSpec) for s in spec):
        raise DomainError(f"expected one CoarseSpec or {n_dirs} of them")
    return spec


def _edge_ring(side: Patch, specs, project_edge) -> np.ndarray:
    """Coarse ring values of a surface side from its simplified edges."""
    kvs = [s.knot_vector() for s in specs]
    grid = np.zeros(tuple(kv.n for kv in kvs) + (side.phys_dim,))
    for k in range(2):
        other = 1 - k
        for f in (0, 1):
            edge = side.side(k, f)  # varies along `other`
            coarse = project_edge(edge, specs[other])
            sl = [slice(None)] * 2
            sl[k] = 0 if f == 0 else -1
            grid[tuple(sl)] = coarse.grid
    return grid


def simplify_side(side: Patch, spec, boundary=None) -> Patch:
    """Primary simplification of one boundary side.

    Parameters
    ----------
    side : Patch
        Curve (2D domains) or surface (3D domains) on its fine basis.
    spec : CoarseSpec or sequence of CoarseSpec
        Coarse basis, one spec per parametric direction of the side.
    boundary : array, optional
        Coarse coefficient grid supplying the pinned boundary ring. By
        default curve endpoints are taken from ``side`` and surface edges
        are simplified first (with their corners pinned).
    """
    specs = _normalize_specs(spec, side.dim)
    for s, kv in zip(specs, side.basis.kvs):
        if s.num_basis >= kv.n:
            raise DomainError(
                f"coarse basis with {s.num_basis} functions is not coarser than the "
                f"side basis with {kv.n} functions")
    kvs = [s.knot_vector() for s in specs]
    if boundary is None:
        if side.dim == 1:
            boundary = np.zeros((kvs[0].n, side.phys_dim))
            boundary[0], boundary[-1] = side.cps[0], side.cps[-1]
        elif side.dim == 2:
            boundary = _edge_ring(side, specs, simplify_side)
        else:
            raise DomainError("sides have parametric dimension 1 or 2")
    return _constrained_projection(side, kvs, boundary)


def _refine_patch(patch: Patch, target: TensorBasis) -> Patch:
    grid = patch.grid
    for k, (kv, tkv) in enumerate(zip(patch.basis.kvs, target.kvs)):
        moved = np.moveaxis(grid, k, 0)
        moved = refine_to(kv, moved.reshape(kv.n, -1), tkv).reshape((tkv.n,) + moved.shape[1:])
        grid = np.moveaxis(moved, 0, k)
    return Patch(target, grid.reshape(-1, patch.phys_dim))


def _pin_boundary_from(out: Patch, src_grid: np.ndarray) -> Patch:
    """Copy the boundary ring (1D: endpoints) of ``src_grid`` into ``out``."""
    grid = out.grid.copy()
    ring = _ring_mask(out.basis.shape)
    grid[ring] = src_grid[ring]
    return out.with_cps(grid.reshape(-1, out.phys_dim))


def reexpress(gamma: Patch, target, mode: str = "refine") -> Patch:
    """Write ``gamma`` on the (finer) ``target`` basis.

    ``mode="refine"`` uses knot insertion and degree elevation and keeps
    the shape; ``mode="project"`` is the constrained L2 projection.
    """
    if isinstance(target, KnotVector):
        target = TensorBasis((target,))
    if target.dim != gamma.dim:
        raise IncompatibleSpaceError("target basis has the wrong dimension")
    if mode == "refine":
        for kv, tkv in zip(gamma.basis.kvs, target.kvs):
            if not tkv.contains(kv):
                raise IncompatibleSpaceError(
                    f"degree-{kv.degree} space with {kv.n} functions is not nested in "
                    f"the degree-{tkv.degree} space with {tkv.n} functions; use "
                    "mode='project'")
        out = _refine_patch(gamma, target)
        if gamma.dim == 1:
            # clamped ends interpolate; keep them bit-identical
            cps = out.cps.copy()
            cps[0], cps[-1] = gamma.cps[0], gamma.cps[-1]
            out = out.with_cps(cps)
        return out
    if mode == "project":
        if gamma.dim == 1:
            pinned = np.zeros((target.size, gamma.phys_dim))
            pinned[0], pinned[-1] = gamma.cps[0], gamma.cps[-1]
        else:
            pinned = np.zeros(target.shape + (gamma.phys_dim,))
            for k in range(2):
                for f in (0, 1):
                    edge = reexpress(gamma.side(k, f), target.without(k), "project")
                    sl = [slice(None)] * 2
                    sl[k] = 0 if f == 0 else -1
                    pinned[tuple(sl)] = edge.grid
        return _constrained_projection(gamma, target.kvs, pinned)
    raise DomainError(f"unknown re-expression mode {mode!r}")


def l2_distance(a: Patch, b: Patch) -> float:
    """Parametric L2 distance between two maps over the same domain."""
    if a.dim != b.dim:
        raise IncompatibleSpaceError("maps of different parametric dimension")
    axes, wts = [], []
    for ka, kb in zip(a.basis.kvs, b.basis.kvs):
        x, w = _union_quadrature(ka, kb)
        axes.append(x)
        wts.append(w)
    diff = a.grid_eval(axes) - b.grid_eval(axes)
    w = wts[0]
    for wk in wts[1:]:
        w = np.multiply.outer(w, wk)
    return float(np.sqrt(np.sum(w * np.sum(diff ** 2, axis=-1))))


def chord_simplification(side: Patch) -> Patch:
    """Baseline replacing a side by the multilinear interpolant of its corners."""
    return simplify_side(side, CoarseSpec(1, 2)) if side.dim == 1 else \
        simplify_side(side, (CoarseSpec(1, 2), CoarseSpec(1, 2)))


def _coarser(spec: CoarseSpec, kv: KnotVector) -> bool:
    return spec.num_basis < kv.n


def _direction_specs(specs, d: int) -> tuple:
    """Normalise user specs into one CoarseSpec per volume direction."""
    if isinstance(specs, CoarseSpec):
        return (specs,) * d
    if isinstance(specs, Mapping):
        per_dir = [None] * d
        for (k, f), s in specs.items():
            free = [j for j in range(d) if j != k]
            if d == 2:
                j = free[0]
                if per_dir[j] is not None and per_dir[j] != s:
                    raise DomainError(
                        "opposite sides must be simplified with identical coarse specs")
                per_dir[j] = s
            else:
                raise DomainError("3D specs are given per volume direction")
        if any(s is None for s in per_dir):
            raise DomainError("missing coarse spec for some side")
        return tuple(per_dir)
    return _normalize_specs(specs, d)


def _nested(gamma: Patch, target: TensorBasis) -> bool:
    return all(t.contains(k) for k, t in zip(gamma.basis.kvs, target.kvs))


def _back_to_fine(gamma: Patch, target: TensorBasis, mode: str) -> Patch:
    if mode == "auto":
        mode = "refine" if _nested(gamma, target) else "project"
    return reexpress(gamma, target, mode)


def build_initial_domain(shell: BoundaryShell, specs, mode: str = "auto",
                         bijectivity: str = "gauss"):
    """Simplify every side, re-express it, and fill the result by Coons.

    Sides whose basis is already no larger than the coarse spec are kept
    as they are.
    ``mode="auto"`` refines where the coarse space is nested in the side
    basis and projects otherwise. Returns ``(initial_patch, simplified_shell)``. Raises
    :class:`InitialDomainError` carrying the quality report when the Coons
    patch is not bijective.
    """
    shell.check_compatible()
    d = shell.dim
    dspecs = _direction_specs(specs, d)
    sides = {}
    if d == 2:
        for (k, f), side in shell.items():
            spec = dspecs[1 - k]
            if not _coarser(spec, side.basis.kvs[0]):
                sides[(k, f)] = side
                continue
            gamma = simplify_side(side, spec)
            fine = _back_to_fine(gamma, side.basis, mode)
            sides[(k, f)] = _pin_boundary_from(fine, side.grid)
    else:
        edges = {}

        def edge_of(k, f, j, g):
            """Simplified edge where ``xi_k = f`` and ``xi_j = g`` (k < j)."""
            key = (k, f, j, g)
            if key not in edges:
                free = [i for i in range(3) if i not in (k, j)][0]
                fixed = {k: f, j: g}
                curve = Patch(TensorBasis((shell.direction_kv(free),)), shell.restrict(fixed))
                if not _coarser(dspecs[free], curve.basis.kvs[0]):
                    edges[key] = (None, curve)
                    return edges[key]
                coarse = simplify_side(curve, dspecs[free])
                fine = _back_to_fine(coarse, curve.basis, mode)
                edges[key] = (coarse, _pin_boundary_from(fine, curve.grid))
            return edges[key]

        for (k, f), side in shell.items():
            free = [i for i in range(3) if i != k]
            side_specs = tuple(dspecs[i] for i in free)
            flags = [_coarser(s, kv) for s, kv in zip(side_specs, side.basis.kvs)]
            if not any(flags):
                sides[(k, f)] = side
                continue
            if not all(flags):
                raise DomainError(f"face {(k, f)} can be coarsened in one direction only")
            ckvs = [s.knot_vector() for s in side_specs]
            cring = np.zeros((ckvs[0].n, ckvs[1].n, shell.phys_dim))
            fring = side.grid.copy()
            for pos, j in enumerate(free):
                for g in (0, 1):
                    a, b = sorted(((k, f), (j, g)))
                    coarse, fine = edge_of(a[0], a[1], b[0], b[1])
                    sl = [slice(None)] * 2
                    sl[pos] = 0 if g == 0 else -1
                    cring[tuple(sl)] = coarse.grid
                    fring[tuple(sl)] = fine.grid
            gamma = simplify_side(side, side_specs, boundary=cring)
            fine_side = _back_to_fine(gamma, side.basis, mode)
            sides[(k, f)] = _pin_boundary_from(fine_side, fring)
    shell0 = BoundaryShell(sides)
    initial = coons_patch(shell0)
    report = check_bijective(initial, bijectivity)
    if not report.bijective:
        q = quality(initial)
        raise InitialDomainError(
            f"initial domain failed: Coons patch of the simplified boundary folds "
            f"(m = {q.m:.4g}); use a coarser simplification", quality=q, patch=initial)
    return initial, shell0
