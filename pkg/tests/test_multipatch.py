import numpy as np
import pytest

from isodeform.bspline import TensorBasis, uniform_knots
from isodeform.deform import DeformConfig, DeformProblem
from isodeform.elasticity import MaterialParams
from isodeform.errors import CompatibilityError, NonBijectiveStateError, TopologyError
from isodeform.fixtures import ring_analog, unit_cube
from isodeform.geometry import Patch, check_bijective, identity_patch
from isodeform.multipatch import (Interface, PatchTopology, build_dof_map, deform_multipatch,
                                  split_patch)

from conftest import fold_patch, square_patch

MAT = MaterialParams(1.0, 0.3)


def two_squares(n=4, degree=2):
    a = square_patch(degree, n)
    b = a.translated([1.0, 0.0])
    return PatchTopology([a, b], [Interface(0, (0, 1), 1, (0, 0), 0)])


def outer_targets(topo, fn):
    return {(k, j, f): topo.patches[k].side(j, f).with_cps(fn(topo.patches[k].side(j, f).cps))
            for k, j, f in topo.outer_sides()}


class TestDofMap:
    def test_single_patch(self):
        p = square_patch(2, 5)
        dm = build_dof_map(PatchTopology([p]))
        assert np.array_equal(dm.maps[0], np.arange(25))
        assert np.array_equal(dm.boundary, p.basis.boundary_mask().ravel())

    def test_two_patches_count(self):
        dm = build_dof_map(two_squares(4))
        assert dm.n_global == 2 * 16 - 4
        assert np.array_equal(np.unique(np.concatenate(dm.maps)), np.arange(dm.n_global))
        shared = np.intersect1d(dm.maps[0], dm.maps[1])
        assert shared.size == 4
        # interface corners lie on the outer boundary, its interior points do not
        assert dm.boundary[shared].sum() == 2

    def test_four_patch_junction(self):
        # patches 0 1 / 2 3 on a 2x2 grid: the centre point is shared by all four
        a = square_patch(2, 4)
        patches = [a.translated([i, j]) for j in (0.0, 1.0) for i in (0.0, 1.0)]
        right, top = ((0, 1), (0, 0)), ((1, 1), (1, 0))
        interfaces = [Interface(0, right[0], 1, right[1], 0), Interface(2, right[0], 3, right[1], 0),
                      Interface(0, top[0], 2, top[1], 0), Interface(1, top[0], 3, top[1], 0)]
        dm = build_dof_map(PatchTopology(patches, interfaces))
        assert dm.n_global == 7 * 7
        centre = [dm.maps[k][np.flatnonzero(np.all(p.cps == 1.0, axis=1))] for k, p in
                  enumerate(patches)]
        assert all(c.size == 1 for c in centre) and len(set(np.concatenate(centre))) == 1

    def test_flipped_interface(self):
        a = square_patch(2, 4)
        grid = a.translated([1.0, 0.0]).grid[:, ::-1]  # reverse the second direction of b
        b = Patch(a.basis, grid.reshape(-1, 2))
        topo = PatchTopology([a, b], [Interface(0, (0, 1), 1, (0, 0), 1)])
        assert build_dof_map(topo).n_global == 28
        with pytest.raises(TopologyError, match="patch 0 side"):
            build_dof_map(PatchTopology([a, b], [Interface(0, (0, 1), 1, (0, 0), 0)]))

    def test_mismatch_names_interface(self):
        topo = two_squares()
        b = topo.patches[1]
        topo = PatchTopology([topo.patches[0], b.translated([1e-6, 0])], topo.interfaces)
        with pytest.raises(TopologyError, match="patch 0 side"):
            build_dof_map(topo)

    def test_side_used_twice(self):
        a = square_patch(2, 4)
        with pytest.raises(TopologyError, match="two interfaces"):
            PatchTopology([a, a.translated([1, 0]), a.translated([1, 0])],
                          [Interface(0, (0, 1), 1, (0, 0)), Interface(0, (0, 1), 2, (0, 0))])

    def test_bad_orientation(self):
        with pytest.raises(TopologyError):
            Interface(0, (0, 1), 1, (0, 0), 9)

    def test_ring_interfaces_interior(self):
        topo, _ = ring_analog()
        dm = build_dof_map(topo)
        n_local = topo.patches[0].basis.size
        kr = topo.patches[0].basis.kvs[0]
        assert dm.n_global == 8 * n_local - 8 * kr.n
        for itf in topo.interfaces:
            ia, _ = topo.matched_pairs(itf)
            g = dm.maps[itf.a][ia]
            inner = ~dm.boundary[g]
            assert inner.sum() == kr.n - 2
            # geometric containment: strictly between the lobed inner curve and the circle
            pts = topo.patches[itf.a].cps[ia[inner]]
            r = np.linalg.norm(pts, axis=1)
            th = np.arctan2(pts[:, 1], pts[:, 0])
            assert np.all(r < 2.0 - 1e-9)
            assert np.all(r > 1.0 + 0.35 * np.cos(6 * th + 0.3) + 1e-9)


def _cube_pair():
    kx, ky, kz = uniform_knots(1, 3), uniform_knots(2, 4), uniform_knots(2, 5)
    a = identity_patch(TensorBasis((kx, ky, kz)))
    # b covers [1,2]x[0,1]x[0,1] with xi0 = x - 1, xi1 = z, xi2 = 1 - y
    gx, gz, gy = kx.greville(), kz.greville(), ky.greville()
    X, Z, Y = np.meshgrid(1 + gx, gz, 1 - gy, indexing="ij")
    b = Patch(TensorBasis((kx, kz, ky)), np.stack([X, Y, Z], -1).reshape(-1, 3))
    return a, b


class TestOrientation3D:
    def test_only_matching_orientation_accepted(self):
        a, b = _cube_pair()
        ok = []
        for o in range(8):
            topo = PatchTopology([a, b], [Interface(0, (0, 1), 1, (0, 0), o)])
            try:
                dm = build_dof_map(topo)
                ok.append(o)
                assert dm.n_global == a.basis.size + b.basis.size - 4 * 5
            except TopologyError:
                pass
        assert ok == [6]

    def test_affine_3d(self):
        a, b = _cube_pair()
        topo = PatchTopology([a, b], [Interface(0, (0, 1), 1, (0, 0), 6)])
        A = np.array([[0.1, 0.02, 0.0], [0.0, -0.05, 0.03], [0.02, 0.0, 0.08]])
        res = deform_multipatch(topo, outer_targets(topo, lambda c: c + c @ A.T),
                                DeformConfig(N=2, material=MAT))
        for p0, p in zip(topo.patches, res.topology.patches):
            assert np.abs(p.cps - (p0.cps + p0.cps @ A.T)).max() <= 1e-9


class TestDeform:
    def test_zero_displacement(self):
        topo = two_squares()
        res = deform_multipatch(topo, outer_targets(topo, lambda c: c), DeformConfig(material=MAT))
        assert not res.displacement.any()

    def test_affine_two_patch(self):
        topo = two_squares(5)
        A = np.array([[0.2, -0.1], [0.15, 0.3]])
        res = deform_multipatch(topo, outer_targets(topo, lambda c: c @ (np.eye(2) + A).T),
                                DeformConfig(N=3, material=MAT))
        for p0, p in zip(topo.patches, res.topology.patches):
            assert np.abs(p.cps - p0.cps @ (np.eye(2) + A).T).max() <= 1e-9
        ia, ib = res.topology.matched_pairs(res.topology.interfaces[0])
        assert np.array_equal(res.topology.patches[0].cps[ia], res.topology.patches[1].cps[ib])

    def test_target_topology(self):
        topo = two_squares(5)
        moved = topo.with_patches([p.translated([0.5, 0.5]) for p in topo.patches])
        res = deform_multipatch(topo, moved, DeformConfig(material=MAT))
        for p, q in zip(res.topology.patches, moved.patches):
            assert np.allclose(p.cps, q.cps, atol=1e-12)

    def test_incomplete_target(self):
        topo = two_squares()
        tg = outer_targets(topo, lambda c: c)
        tg.pop(next(iter(tg)))
        with pytest.raises(CompatibilityError):
            deform_multipatch(topo, tg, DeformConfig(material=MAT))

    def test_folded_initial_named(self):
        f = fold_patch()
        topo = PatchTopology([square_patch(2, 6), f.translated([1, 0])])
        with pytest.raises(NonBijectiveStateError, match="patch 1"):
            deform_multipatch(topo, outer_targets(topo, lambda c: c), DeformConfig(material=MAT))


@pytest.mark.parametrize("d", [2, 3])
def test_split_residual_consistency(rng, d):
    if d == 2:
        base = square_patch(2, 6)
    else:
        base = unit_cube(2, 4)
    base = base.with_cps(base.cps + 0.02 * rng.normal(size=base.cps.shape))
    refined, topo = split_patch(base, 0, 0.5)
    U_ref = 0.03 * rng.normal(size=refined.cps.shape)
    single = DeformProblem([refined], [np.arange(refined.basis.size)],
                           refined.basis.boundary_mask().ravel(), refined.cps, MAT)
    r1, K1 = single.assemble(U_ref)
    dm = build_dof_map(topo)
    assert dm.n_global == refined.basis.size
    multi = DeformProblem(topo.patches, dm.maps, dm.boundary, refined.cps, MAT)
    # global numbering of the split assembly follows the refined grid order
    c0 = multi.c0
    order = [int(np.flatnonzero(np.all(np.abs(c0 - x) < 1e-14, axis=1))[0]) for x in refined.cps]
    U = np.zeros_like(U_ref)
    U[order] = U_ref
    r2, K2 = multi.assemble(U)
    r2 = r2.reshape(-1, d)[order].ravel()
    assert np.abs(r1 - r2).max() <= 1e-10
    dofs = (np.asarray(order)[:, None] * d + np.arange(d)).ravel()
    assert abs(K1 - K2[dofs][:, dofs]).max() <= 1e-10


def test_split_preserves_geometry(rng):
    base = square_patch(3, 7)
    refined, topo = split_patch(base, 1, 0.4)
    for xi in rng.random((20, 2)):
        from isodeform.geometry import eval_patch
        y = eval_patch(base, xi)
        if xi[1] < 0.4:
            z = eval_patch(topo.patches[0], (xi[0], xi[1] / 0.4))
        else:
            z = eval_patch(topo.patches[1], (xi[0], (xi[1] - 0.4) / 0.6))
        assert np.allclose(y, z, atol=1e-13)
        assert np.allclose(y, eval_patch(refined, xi), atol=1e-13)


def test_ring_deforms():
    topo, targets = ring_analog()
    res = deform_multipatch(topo, targets, DeformConfig(N=5, material=MaterialParams(1, 0.48)))
    for p in res.topology.patches:
        assert check_bijective(p).bijective
    for itf in res.topology.interfaces:
        ia, ib = res.topology.matched_pairs(itf, tol=0.0)
        assert np.array_equal(res.topology.patches[itf.a].cps[ia],
                              res.topology.patches[itf.b].cps[ib])
