"""Tensor-product patches, boundary shells, Coons patches and Jacobian checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable

import numpy as np

from .bspline import (KnotVector, TensorBasis, basis_table, collocation,
                      span_quadrature)
from .errors import CompatibilityError, DimensionError, DomainError

__all__ = [
    "Patch",
    "BoundaryShell",
    "JacobianSample",
    "QualityReport",
    "BijectivityReport",
    "eval_patch",
    "jacobian",
    "coons_patch",
    "quality",
    "check_bijective",
    "split_c0",
    "identity_patch",
    "sample_axes",
    "gauss_axes",
]


def _tensor_apply(mats, grid):
    """Contract matrix ``mats[k]`` with axis ``k`` of ``grid``."""
    for k, m in enumerate(mats):
        grid = np.moveaxis(np.tensordot(m, grid, axes=(1, k)), 0, k)
    return grid


@dataclass(frozen=True, eq=False)
class Patch:
    """Geometry map ``sum_i c_i B_i(xi)`` over a tensor basis.

    ``cps`` has shape ``(basis.size, d_phys)`` in C order over the basis
    shape, i.e. the last parametric direction runs fastest.
    """

    basis: TensorBasis
    cps: np.ndarray

    def __post_init__(self):
        if isinstance(self.basis, KnotVector):
            object.__setattr__(self, "basis", TensorBasis((self.basis,)))
        cps = np.array(self.cps, dtype=float)
        if cps.ndim == 1:
            cps = cps[:, None]
        if cps.ndim != 2:
            cps = cps.reshape(-1, cps.shape[-1])
        if cps.shape[0] != self.basis.size:
            raise DomainError(
                f"{cps.shape[0]} control points for a basis of size {self.basis.size}")
        if self.basis.dim > cps.shape[1]:
            raise DimensionError(
                f"parametric dimension {self.basis.dim} exceeds physical {cps.shape[1]}")
        cps.setflags(write=False)
        object.__setattr__(self, "cps", cps)

    @property
    def dim(self) -> int:
        """Parametric dimension."""
        return self.basis.dim

    @property
    def phys_dim(self) -> int:
        return self.cps.shape[1]

    @property
    def grid(self) -> np.ndarray:
        return self.cps.reshape(self.basis.shape + (self.phys_dim,))

    def with_cps(self, cps) -> "Patch":
        return Patch(self.basis, cps)

    def evaluate(self, xi) -> np.ndarray:
        return eval_patch(self, xi)

    def grid_eval(self, axes, jacobian: bool = False):
        """Values (and optionally gradients) on the tensor grid of ``axes``.

        Returns ``values`` with shape ``(*lens, d_phys)`` and, if asked,
        ``grad`` with shape ``(*lens, d_phys, d_par)``.
        """
        if len(axes) != self.dim:
            raise DimensionError(f"need {self.dim} sample axes, got {len(axes)}")
        v = [collocation(kv, ax, 0) for kv, ax in zip(self.basis.kvs, axes)]
        vals = _tensor_apply(v, self.grid)
        if not jacobian:
            return vals
        d = [collocation(kv, ax, 1) for kv, ax in zip(self.basis.kvs, axes)]
        cols = []
        for m in range(self.dim):
            mats = [d[k] if k == m else v[k] for k in range(self.dim)]
            cols.append(_tensor_apply(mats, self.grid))
        return vals, np.stack(cols, axis=-1)

    def side(self, direction: int, face: int) -> "Patch":
        """Boundary side where parameter ``direction`` equals ``face``."""
        if self.dim < 2:
            raise DimensionError("curves have no boundary sides")
        sl = [slice(None)] * self.dim
        sl[direction] = 0 if face == 0 else -1
        sub = self.grid[tuple(sl)]
        return Patch(self.basis.without(direction), sub.reshape(-1, self.phys_dim))

    def boundary(self) -> "BoundaryShell":
        return BoundaryShell({(k, f): self.side(k, f)
                              for k in range(self.dim) for f in (0, 1)})

    def side_indices(self, direction: int, face: int) -> np.ndarray:
        """Flat control point indices lying on the given side."""
        idx = np.arange(self.basis.size).reshape(self.basis.shape)
        sl = [slice(None)] * self.dim
        sl[direction] = 0 if face == 0 else -1
        return idx[tuple(sl)].ravel()

    def translated(self, t) -> "Patch":
        return self.with_cps(self.cps + np.asarray(t, dtype=float))

    def scaled(self, s: float) -> "Patch":
        return self.with_cps(self.cps * float(s))


def identity_patch(basis: TensorBasis) -> Patch:
    """Identity map of the unit cube on ``basis`` (Greville control points)."""
    return Patch(basis, basis.greville_grid())


def _as_points(xi, dim):
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim <= 1
    pts = np.atleast_2d(xi).reshape(-1, dim)
    return pts, single


def eval_patch(patch: Patch, xi) -> np.ndarray:
    """Physical image of one parametric point or an ``(m, d_par)`` array."""
    pts, single = _as_points(xi, patch.dim)
    out = np.zeros((pts.shape[0], patch.phys_dim))
    firsts, tables = [], []
    for k, kv in enumerate(patch.basis.kvs):
        f, t = basis_table(kv, pts[:, k], 0)
        firsts.append(f)
        tables.append(t[:, 0, :])
    grid = patch.grid
    for loc in product(*[range(kv.degree + 1) for kv in patch.basis.kvs]):
        w = np.ones(pts.shape[0])
        idx = []
        for k, r in enumerate(loc):
            w = w * tables[k][:, r]
            idx.append(firsts[k] + r)
        out += w[:, None] * grid[tuple(idx)]
    return out[0] if single else out


def _gradients(patch: Patch, pts: np.ndarray) -> np.ndarray:
    out = np.zeros((pts.shape[0], patch.phys_dim, patch.dim))
    firsts, tables = [], []
    for k, kv in enumerate(patch.basis.kvs):
        f, t = basis_table(kv, pts[:, k], 1)
        firsts.append(f)
        tables.append(t)
    grid = patch.grid
    for loc in product(*[range(kv.degree + 1) for kv in patch.basis.kvs]):
        idx = tuple(firsts[k] + r for k, r in enumerate(loc))
        c = grid[idx]
        for m in range(patch.dim):
            w = np.ones(pts.shape[0])
            for k, r in enumerate(loc):
                w = w * tables[k][:, 1 if k == m else 0, r]
            out[:, :, m] += w[:, None] * c
    return out


@dataclass(frozen=True)
class JacobianSample:
    location: np.ndarray
    gradient: np.ndarray
    det: float


def jacobian(patch: Patch, xi) -> JacobianSample | list:
    """Jacobian of the geometry map at one point (or a list for many)."""
    if patch.dim != patch.phys_dim:
        raise DimensionError(
            f"Jacobian determinant needs d_par == d_phys, got {patch.dim} and "
            f"{patch.phys_dim}")
    pts, single = _as_points(xi, patch.dim)
    _check_unit(pts)
    grads = _gradients(patch, pts)
    dets = np.linalg.det(grads)
    samples = [JacobianSample(p, g, float(d)) for p, g, d in zip(pts, grads, dets)]
    return samples[0] if single else samples


def _check_unit(pts):
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise DomainError("parametric point outside the unit cube")


def det_grid(patch: Patch, axes) -> np.ndarray:
    """Jacobian determinants on a tensor grid."""
    if patch.dim != patch.phys_dim:
        raise DimensionError("Jacobian determinant needs d_par == d_phys")
    _, grad = patch.grid_eval(axes, jacobian=True)
    return np.linalg.det(grad)


class BoundaryShell:
    """The ``2 d`` sides of a d-dimensional patch boundary.

    ``sides`` maps ``(direction, face)`` to a patch of parametric dimension
    ``d - 1`` whose parameters are the remaining directions in order.
    """

    def __init__(self, sides):
        sides = {(int(k), int(f)): s for (k, f), s in dict(sides).items()}
        d = len(sides) // 2
        if d not in (2, 3) or set(sides) != {(k, f) for k in range(d) for f in (0, 1)}:
            raise CompatibilityError(
                "a shell needs 4 sides (2D) or 6 sides (3D) keyed (direction, face)")
        for key, s in sides.items():
            if s.dim != d - 1:
                raise CompatibilityError(f"side {key} has parametric dimension {s.dim}")
        self.sides = sides
        self.dim = d

    def __getitem__(self, key) -> Patch:
        return self.sides[key]

    def __iter__(self):
        return iter(sorted(self.sides))

    def items(self):
        return sorted(self.sides.items())

    @property
    def phys_dim(self) -> int:
        return self.sides[(0, 0)].phys_dim

    def direction_kv(self, k: int) -> KnotVector:
        j = 1 if k == 0 else 0
        pos = k if k < j else k - 1
        return self.sides[(j, 0)].basis.kvs[pos]

    @property
    def basis(self) -> TensorBasis:
        return TensorBasis(tuple(self.direction_kv(k) for k in range(self.dim)))

    def restrict(self, fixed: dict) -> np.ndarray:
        """Control net of the boundary entity with ``fixed`` directions set.

        Axes of the result are the free directions in increasing order,
        followed by the physical coordinate.
        """
        k0 = min(fixed)
        net = self.sides[(k0, fixed[k0])].grid
        free = [k for k in range(self.dim) if k != k0]
        sl = [slice(None)] * len(free)
        for k, f in fixed.items():
            if k != k0:
                sl[free.index(k)] = 0 if f == 0 else -1
        return net[tuple(sl)]

    def check_compatible(self, tol: float = 1e-12) -> None:
        d = self.dim
        for k in range(d):
            if self.sides[(k, 0)].basis != self.sides[(k, 1)].basis:
                raise CompatibilityError(
                    f"opposite sides ({k}, 0) and ({k}, 1) carry different bases")
        for k in range(d):
            kvs = set()
            for j in range(d):
                if j == k:
                    continue
                pos = k if k < j else k - 1
                kvs.add(self.sides[(j, 0)].basis.kvs[pos])
            if len(kvs) != 1:
                raise CompatibilityError(f"sides disagree on the basis of direction {k}")
        scale = max(1.0, float(np.abs(np.concatenate(
            [s.cps for s in self.sides.values()])).max()))
        for a, b in combinations(range(d), 2):
            for fa, fb in product((0, 1), repeat=2):
                ea = self._edge(a, fa, b, fb)
                eb = self._edge(b, fb, a, fa)
                if np.abs(ea - eb).max() > tol * scale:
                    raise CompatibilityError(
                        f"sides ({a}, {fa}) and ({b}, {fb}) disagree on their shared "
                        f"boundary by {np.abs(ea - eb).max():.3e}")

    def _edge(self, a, fa, b, fb):
        net = self.sides[(a, fa)].grid
        free = [k for k in range(self.dim) if k != a]
        sl = [slice(None)] * len(free)
        sl[free.index(b)] = 0 if fb == 0 else -1
        return net[tuple(sl)]

    def translated(self, t) -> "BoundaryShell":
        return BoundaryShell({k: s.translated(t) for k, s in self.sides.items()})


def coons_patch(shell: BoundaryShell) -> Patch:
    """Transfinite (Coons) interpolation of a compatible boundary shell.

    Blends are applied on the control net: the linear blending functions
    ``1 - xi`` and ``xi`` are represented exactly by Greville abscissae.
    Boundary control points are copied from the shell verbatim.
    """
    shell.check_compatible()
    basis = shell.basis
    d = shell.dim
    g = [kv.greville() for kv in basis.kvs]
    shape = basis.shape + (shell.phys_dim,)
    net = np.zeros(shape)
    for r in range(1, d + 1):
        sign = 1.0 if r % 2 else -1.0
        for dirs in combinations(range(d), r):
            for faces in product((0, 1), repeat=r):
                fixed = dict(zip(dirs, faces))
                data = shell.restrict(fixed)
                for k in dirs:
                    data = np.expand_dims(data, k)
                w = np.ones(basis.shape)
                for k, f in fixed.items():
                    wk = g[k] if f == 1 else 1.0 - g[k]
                    sh = [1] * d
                    sh[k] = -1
                    w = w * wk.reshape(sh)
                net += sign * w[..., None] * data
    for (k, f), side in shell.items():
        sl = [slice(None)] * d
        sl[k] = 0 if f == 0 else -1
        net[tuple(sl)] = side.grid
    return Patch(basis, net.reshape(-1, shell.phys_dim))


def sample_axes(patch: Patch, samples_per_span: int | None = None):
    """Uniform sample abscissae per direction, span endpoints included."""
    axes = []
    for kv in patch.basis.kvs:
        s = kv.degree + 2 if samples_per_span is None else int(samples_per_span)
        if s < 1:
            raise DomainError("samples_per_span must be at least 1")
        m = kv.mesh
        if s == 1:
            pts = 0.5 * (m[:-1] + m[1:])
        else:
            pts = np.unique(np.concatenate(
                [np.linspace(a, b, s) for a, b in zip(m[:-1], m[1:])]))
        axes.append(pts)
    return axes


def gauss_axes(patch: Patch):
    return [span_quadrature(kv)[0].ravel() for kv in patch.basis.kvs]


@dataclass(frozen=True)
class QualityReport:
    m: float
    R: float

    def __iter__(self):
        return iter((self.m, self.R))

    @property
    def valid(self) -> bool:
        return self.m > 0


def quality(patch: Patch, samples_per_span: int | None = None) -> QualityReport:
    """Minimum Jacobian ``m`` and max/min ratio ``R`` on a uniform grid.

    ``R`` is ``inf`` when ``m <= 0``.
    """
    dets = det_grid(patch, sample_axes(patch, samples_per_span))
    m = float(dets.min())
    R = float(dets.max() / m) if m > 0 else float("inf")
    return QualityReport(m, R)


@dataclass
class BijectivityReport:
    bijective: bool
    strategy: str
    worst: object = None
    threshold: float = 0.0
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.bijective


def _volume_floor(patch: Patch, tol: float) -> float:
    axes, wts = [], []
    for kv in patch.basis.kvs:
        p, w = span_quadrature(kv)
        axes.append(p.ravel())
        wts.append(w.ravel())
    dets = det_grid(patch, axes)
    w = wts[0]
    for wk in wts[1:]:
        w = np.multiply.outer(w, wk)
    vol = float(np.sum(w * np.abs(dets)))
    return max(float(tol), 1e-12 * vol), dets, axes


def check_bijective(patch: Patch, strategy: str = "gauss", tol: float = 0.0) -> BijectivityReport:
    """Test ``det grad G > tol`` by Gauss sampling or spline coefficients.

    ``strategy="gauss"`` samples every Gauss point of the patch basis.
    ``strategy="coefficient"`` expands the determinant in a spline space
    that contains it exactly and requires positive coefficients; it can
    reject bijective patches but never accepts a folded one.
    """
    if patch.dim != patch.phys_dim:
        raise DimensionError("bijectivity needs d_par == d_phys")
    floor, dets, axes = _volume_floor(patch, tol)
    if strategy in ("gauss", "gauss-sampling"):
        flat = int(np.argmin(dets))
        loc = np.unravel_index(flat, dets.shape)
        xi = np.array([axes[k][i] for k, i in enumerate(loc)])
        worst = jacobian(patch, xi)
        return BijectivityReport(bool(dets.min() > floor), "gauss", worst, floor)
    if strategy in ("coefficient", "coefficient-test"):
        worst = np.inf
        for piece in split_c0(patch):
            worst = min(worst, float(det_coefficients(piece).min()))
        return BijectivityReport(bool(worst > floor), "coefficient", worst, floor)
    raise DomainError(f"unknown bijectivity strategy {strategy!r}")


def det_space(kv: KnotVector, d: int) -> KnotVector:
    """Univariate factor of a spline space containing ``det grad G``."""
    p = kv.degree
    if p < 1:
        raise DomainError("degree-0 patches have no Jacobian")
    D = d * p
    vals, counts = np.unique(kv.interior_knots(), return_counts=True)
    mult = np.minimum(D - p + counts + 1, D)
    inner = np.repeat(vals, mult)
    knots = np.concatenate([np.zeros(D + 1), inner, np.ones(D + 1)])
    return KnotVector(D, tuple(knots))


def det_coefficients(patch: Patch) -> np.ndarray:
    """Spline coefficients of ``det grad G`` on the product space.

    The patch must be at most C^0-free inside (call :func:`split_c0`
    first); coefficients are found by interpolation at Greville points.
    """
    d = patch.dim
    spaces = [det_space(kv, d) for kv in patch.basis.kvs]
    axes = [s.greville() for s in spaces]
    vals = det_grid(patch, axes)
    inv = [np.linalg.inv(collocation(s, ax)) for s, ax in zip(spaces, axes)]
    return _tensor_apply(inv, vals)


def _split_kv(kv: KnotVector):
    """Split points (knot values of multiplicity p) and per-piece data."""
    p = kv.degree
    t = kv.array
    cuts = [x for x in np.unique(kv.interior_knots()) if kv.multiplicity(x) >= p]
    pieces = []
    lo_val, lo_fn = 0.0, 0
    for x in cuts + [1.0]:
        if x < 1.0:
            s = int(np.searchsorted(t, x, side="left"))
            hi_fn = s - 1
        else:
            hi_fn = kv.n - 1
        inner = t[(t > lo_val) & (t < x)]
        knots = np.concatenate([np.zeros(p + 1), (inner - lo_val) / (x - lo_val), np.ones(p + 1)])
        pieces.append((KnotVector(p, tuple(knots)), lo_fn, hi_fn))
        lo_val, lo_fn = x, hi_fn
    return pieces


def split_c0(patch: Patch) -> list:
    """Split a patch at interior knots of full multiplicity (C^0 lines).

    Each piece is reparametrized onto the unit cube; determinant signs are
    unaffected.
    """
    per_dir = [_split_kv(kv) for kv in patch.basis.kvs]
    if all(len(p) == 1 for p in per_dir):
        return [patch]
    grid = patch.grid
    out = []
    for combo in product(*per_dir):
        kvs = tuple(c[0] for c in combo)
        sl = tuple(slice(c[1], c[2] + 1) for c in combo)
        out.append(Patch(TensorBasis(kvs), grid[sl].reshape(-1, patch.phys_dim)))
    return out
