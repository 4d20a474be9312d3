"""C0-coupled patch assemblies.

Patches are glued along explicitly declared interfaces. Coefficients on
paired sides collapse onto shared global unknowns, so an assembly is
solved as one problem and interfaces stay continuous by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bspline import KnotVector, TensorBasis, refine_to
from .deform import DeformConfig, DeformProblem, SolverReport, solve
from .elasticity import MaterialParams
from .errors import (CompatibilityError, DomainError, NonBijectiveStateError,
                     TopologyError)
from .geometry import Patch, check_bijective

__all__ = [
    "Interface",
    "PatchTopology",
    "GlobalDofMap",
    "build_dof_map",
    "deform_multipatch",
    "split_patch",
    "MultipatchResult",
]

Side = tuple  # (direction, face)


@dataclass(frozen=True)
class Interface:
    """Side ``side_a`` of patch ``a`` glued to side ``side_b`` of patch ``b``.

    ``orientation`` maps the coefficient grid of side ``b`` onto that of
    side ``a``. On curves it is a flip flag (0 or 1). On faces it is an
    integer 0..7 read as three bits ``(swap, flip_first, flip_second)``:
    axes are swapped first, then reversed.
    """

    a: int
    side_a: Side
    b: int
    side_b: Side
    orientation: int = 0

    def __post_init__(self):
        object.__setattr__(self, "side_a", (int(self.side_a[0]), int(self.side_a[1])))
        object.__setattr__(self, "side_b", (int(self.side_b[0]), int(self.side_b[1])))
        o = int(self.orientation)
        if not 0 <= o <= 7:
            raise TopologyError(f"interface orientation {o} outside 0..7")
        object.__setattr__(self, "orientation", o)

    def label(self) -> str:
        return f"patch {self.a} side {self.side_a} / patch {self.b} side {self.side_b}"


def _reverse_kv(kv: KnotVector) -> KnotVector:
    return KnotVector(kv.degree, 1.0 - kv.array[::-1])


def _orient(grid: np.ndarray, kvs: Sequence[KnotVector], orientation: int, side_dim: int):
    """Apply an interface orientation to a side's index grid and knot vectors."""
    kvs = list(kvs)
    if side_dim == 1:
        if orientation > 1:
            raise TopologyError("curve interfaces only take orientation 0 or 1")
        if orientation:
            grid = grid[::-1]
            kvs = [_reverse_kv(kvs[0])]
        return grid, kvs
    swap, f0, f1 = (orientation >> 2) & 1, (orientation >> 1) & 1, orientation & 1
    if swap:
        grid = np.swapaxes(grid, 0, 1)
        kvs = kvs[::-1]
    if f0:
        grid = grid[::-1]
        kvs[0] = _reverse_kv(kvs[0])
    if f1:
        grid = grid[:, ::-1]
        kvs[1] = _reverse_kv(kvs[1])
    return grid, kvs


def _side_grid(patch: Patch, side: Side) -> np.ndarray:
    """Local indices of a side arranged on the side's parametric grid."""
    k, f = side
    idx = np.arange(patch.basis.size).reshape(patch.basis.shape)
    return np.take(idx, 0 if f == 0 else -1, axis=k)


@dataclass
class PatchTopology:
    patches: list
    interfaces: list = field(default_factory=list)

    def __post_init__(self):
        self.patches = list(self.patches)
        self.interfaces = [i if isinstance(i, Interface) else Interface(*i)
                           for i in self.interfaces]
        if not self.patches:
            raise TopologyError("an assembly needs at least one patch")
        d = self.patches[0].dim
        if any(p.dim != d or p.phys_dim != self.patches[0].phys_dim for p in self.patches):
            raise TopologyError("all patches must share parametric and physical dimension")
        seen = {}
        for itf in self.interfaces:
            for pk, side in ((itf.a, itf.side_a), (itf.b, itf.side_b)):
                if not 0 <= pk < len(self.patches):
                    raise TopologyError(f"interface {itf.label()}: no patch {pk}")
                if not (0 <= side[0] < d and side[1] in (0, 1)):
                    raise TopologyError(f"interface {itf.label()}: bad side {side}")
                if (pk, side) in seen:
                    raise TopologyError(
                        f"side {side} of patch {pk} appears in two interfaces")
                seen[(pk, side)] = itf

    @property
    def dim(self) -> int:
        return self.patches[0].dim

    @property
    def phys_dim(self) -> int:
        return self.patches[0].phys_dim

    def matched_pairs(self, itf: Interface, tol: float = 1e-10):
        """Local index pairs ``(ia, ib)`` identified by an interface.

        Raises :class:`TopologyError` naming the interface when bases or
        control points disagree.
        """
        pa, pb = self.patches[itf.a], self.patches[itf.b]
        ga = _side_grid(pa, itf.side_a)
        gb, kvs_b = _orient(_side_grid(pb, itf.side_b), pb.basis.without(itf.side_b[0]).kvs,
                            itf.orientation, self.dim - 1)
        kvs_a = pa.basis.without(itf.side_a[0]).kvs
        if ga.shape != gb.shape or any(x != y for x, y in zip(kvs_a, kvs_b)):
            raise TopologyError(f"interface {itf.label()}: side bases differ")
        ia, ib = ga.ravel(), gb.ravel()
        gap = np.abs(pa.cps[ia] - pb.cps[ib]).max()
        if gap > tol:
            raise TopologyError(
                f"interface {itf.label()}: control points differ by {gap:.3g}")
        return ia, ib

    def outer_sides(self) -> list:
        """``(patch, direction, face)`` for every side not on an interface."""
        used = set()
        for itf in self.interfaces:
            used.add((itf.a,) + itf.side_a)
            used.add((itf.b,) + itf.side_b)
        return [(k, j, f) for k in range(len(self.patches)) for j in range(self.dim)
                for f in (0, 1) if (k, j, f) not in used]

    def with_patches(self, patches) -> "PatchTopology":
        return PatchTopology(list(patches), list(self.interfaces))


@dataclass(frozen=True)
class GlobalDofMap:
    maps: tuple
    n_global: int
    boundary: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return ~self.boundary


def build_dof_map(topology: PatchTopology) -> GlobalDofMap:
    """Number the control points of an assembly, sharing interface ones."""
    sizes = [p.basis.size for p in topology.patches]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    parent = np.arange(offsets[-1])

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for itf in topology.interfaces:
        ia, ib = topology.matched_pairs(itf)
        for x, y in zip(ia + offsets[itf.a], ib + offsets[itf.b]):
            rx, ry = find(x), find(y)
            if rx != ry:
                lo, hi = min(rx, ry), max(rx, ry)
                parent[hi] = lo
    roots = np.array([find(i) for i in range(offsets[-1])])
    # number by first appearance in patch order
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    glob = order[inverse]
    maps = tuple(glob[offsets[k]:offsets[k + 1]] for k in range(len(sizes)))
    n = int(glob.max()) + 1
    boundary = np.zeros(n, dtype=bool)
    for k, j, f in topology.outer_sides():
        boundary[maps[k][topology.patches[k].side_indices(j, f)]] = True
    return GlobalDofMap(maps, n, boundary)


@dataclass
class MultipatchResult:
    topology: PatchTopology
    report: SolverReport
    displacement: np.ndarray
    dof_map: GlobalDofMap


def _target_positions(topology, dmap, target, tol=1e-10):
    c0 = np.zeros((dmap.n_global, topology.phys_dim))
    for p, m in zip(topology.patches, dmap.maps):
        c0[m] = p.cps
    tgt = c0.copy()
    if isinstance(target, PatchTopology):
        target = {(k, j, f): target.patches[k].side(j, f) for k, j, f in topology.outer_sides()}
    assigned = np.zeros(dmap.n_global, dtype=bool)
    for key, side in target.items():
        k, j, f = key
        patch = topology.patches[k]
        if (k, j, f) not in topology.outer_sides():
            raise DomainError(f"side {(j, f)} of patch {k} is not on the outer boundary")
        if side.basis != patch.basis.without(j):
            raise CompatibilityError(f"target side {(j, f)} of patch {k} has the wrong basis")
        g = dmap.maps[k][patch.side_indices(j, f)]
        clash = assigned[g] & (np.abs(tgt[g] - side.cps).max(axis=1) > tol)
        if clash.any():
            raise CompatibilityError(
                f"target side {(j, f)} of patch {k} disagrees with a neighbouring side")
        tgt[g] = side.cps
        assigned[g] = True
    missing = dmap.boundary & ~assigned
    if missing.any():
        raise CompatibilityError("target data does not cover the whole outer boundary")
    return tgt


def deform_multipatch(topology0: PatchTopology, target, config: DeformConfig | None = None):
    """Deform an assembly so its outer boundary matches ``target``.

    ``target`` is either a mapping ``(patch, direction, face) -> side Patch``
    covering every outer side, or a topology with the same layout whose
    outer sides are used.
    """
    config = config or DeformConfig()
    for k, p in enumerate(topology0.patches):
        if not check_bijective(p, config.bijectivity_strategy).bijective:
            raise NonBijectiveStateError(f"initial patch {k} is not bijective", element=k)
    dmap = build_dof_map(topology0)
    tgt = _target_positions(topology0, dmap, target)
    problem = DeformProblem(topology0.patches, dmap.maps, dmap.boundary, tgt,
                            config.material_for(topology0.patches[0].phys_dim))
    u, report = solve(problem, config)
    patches = problem.deformed_patches(u, exact_boundary=True)
    for k, p in enumerate(patches):
        rep = check_bijective(p, config.bijectivity_strategy)
        if not rep.bijective:
            raise NonBijectiveStateError(
                f"deformed patch {k} is not bijective (min det {rep.worst:.3g})",
                element=k, min_jacobian=rep.worst)
    return MultipatchResult(topology0.with_patches(patches), report, u, dmap)


def _rescaled(kv: KnotVector, lo: float, hi: float, keep) -> KnotVector:
    t = kv.array[keep]
    return KnotVector(kv.degree, (t - lo) / (hi - lo))


def split_patch(patch: Patch, direction: int, at: float):
    """Cut a patch along the knot line ``xi_direction = at``.

    Returns ``(refined, topology)``: the unsplit patch after inserting
    ``at`` to full multiplicity, and the two-patch assembly whose halves
    together carry exactly the same control points.
    """
    if not 0.0 < at < 1.0:
        raise DomainError(f"split location {at} must lie strictly inside (0, 1)")
    kv = patch.basis.kvs[direction]
    p = kv.degree
    have = kv.multiplicity(at)
    knots = np.sort(np.concatenate([kv.array, np.full(p - have, at)]))
    fine = KnotVector(p, knots)
    kvs = list(patch.basis.kvs)
    kvs[direction] = fine
    grid = np.moveaxis(patch.grid, direction, 0)
    shp = grid.shape
    moved = refine_to(kv, grid.reshape(shp[0], -1), fine).reshape((fine.n,) + shp[1:])
    refined = Patch(TensorBasis(tuple(kvs)), np.moveaxis(moved, 0, direction).reshape(-1, patch.phys_dim))

    arr = fine.array
    first = np.flatnonzero(arr == at)[0]
    n_left = first  # basis functions of the left piece
    left_kv = _rescaled(fine, 0.0, at, np.r_[np.arange(first + p), first + p - 1])
    right_kv = _rescaled(fine, at, 1.0, np.r_[first, np.arange(first, len(arr))])
    full = np.moveaxis(refined.grid, direction, 0)
    pieces = []
    for sub_kv, sl in ((left_kv, slice(0, n_left)), (right_kv, slice(n_left - 1, None))):
        kk = list(kvs)
        kk[direction] = sub_kv
        sub = np.moveaxis(full[sl], 0, direction)
        pieces.append(Patch(TensorBasis(tuple(kk)), sub.reshape(-1, patch.phys_dim)))
    itf = Interface(0, (direction, 1), 1, (direction, 0), 0)
    return refined, PatchTopology(pieces, [itf])
