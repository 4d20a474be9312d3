import numpy as np
import pytest
from hypothesis import given, strategies as st

from isodeform.bspline import TensorBasis, uniform_knots
from isodeform.errors import DomainError, IncompatibleSpaceError, InitialDomainError
from isodeform.fixtures import concave_dent, dented_cube, mild_quad, puzzle_analog
from isodeform.geometry import Patch, check_bijective, det_grid
from isodeform.simplify import (CoarseSpec, build_initial_domain, chord_simplification,
                                l2_distance, reexpress, simplify_side)

PUZZLE = puzzle_analog()
BOTTOM = PUZZLE[(1, 0)]


def curve(kv, pts):
    return Patch(TensorBasis((kv,)), np.asarray(pts, float))


class TestCoarseSpec:
    def test_default_size(self):
        assert CoarseSpec(3).num_basis == 4

    @pytest.mark.parametrize("q,m", [(0, 2), (2, 2)])
    def test_invalid(self, q, m):
        with pytest.raises(DomainError):
            CoarseSpec(q, m)

    def test_not_coarser(self):
        with pytest.raises(DomainError, match="not coarser"):
            simplify_side(BOTTOM, CoarseSpec(3, 20))


class TestSimplifySide:
    def test_straight_segment(self):
        kv = uniform_knots(3, 12)
        a, b = np.array([0.2, -1.0]), np.array([3.0, 0.5])
        seg = curve(kv, a + np.outer(kv.greville(), b - a))
        for spec in (CoarseSpec(1), CoarseSpec(2, 5), CoarseSpec(3, 7)):
            g = simplify_side(seg, spec)
            xs = np.linspace(0, 1, 50)
            assert np.abs(g.grid_eval([xs]) - seg.grid_eval([xs])).max() < 1e-12

    def test_idempotent_on_coarse_space(self, rng):
        coarse = uniform_knots(2, 5)
        cps = rng.normal(size=(5, 2))
        fine = reexpress(curve(coarse, cps), coarse.elevated(1).uniformly_refined(3))
        g = simplify_side(fine, CoarseSpec(2, 5))
        assert np.abs(g.cps - cps).max() < 1e-10

    def test_endpoints_exact(self):
        for q in (1, 2, 3, 4):
            g = simplify_side(BOTTOM, CoarseSpec(q))
            assert np.array_equal(g.cps[0], BOTTOM.cps[0])
            assert np.array_equal(g.cps[-1], BOTTOM.cps[-1])

    def test_distance_non_increasing_in_degree(self):
        d = [l2_distance(simplify_side(BOTTOM, CoarseSpec(q)), BOTTOM) for q in (1, 2, 3, 4)]
        assert all(b <= a + 1e-14 for a, b in zip(d, d[1:]))

    @given(st.integers(1, 3), st.integers(0, 1), st.sampled_from([1e-3, -1e-3]))
    def test_best_approximation(self, i, comp, delta):
        g = simplify_side(BOTTOM, CoarseSpec(3, 5))
        base = l2_distance(g, BOTTOM)
        cps = g.cps.copy()
        cps[i, comp] += delta
        assert l2_distance(g.with_cps(cps), BOTTOM) > base

    def test_surface_edges_pinned(self):
        top = dented_cube()[(2, 1)]
        g = simplify_side(top, (CoarseSpec(2), CoarseSpec(2)))
        for k in range(2):
            for f in (0, 1):
                edge_fine, edge_coarse = top.side(k, f), g.side(k, f)
                ref = simplify_side(edge_fine, CoarseSpec(2))
                assert np.array_equal(edge_coarse.cps, ref.cps)


class TestReexpress:
    def test_linear_to_cubic(self):
        g = curve(uniform_knots(1, 2), [[0, 0], [1, 2]])
        fine = reexpress(g, uniform_knots(3, 20))
        xs = np.linspace(0, 1, 200)
        assert np.abs(g.grid_eval([xs]) - fine.grid_eval([xs])).max() < 1e-12

    def test_refine_not_nested(self):
        g = simplify_side(BOTTOM, CoarseSpec(4, 6))
        with pytest.raises(IncompatibleSpaceError):
            reexpress(g, BOTTOM.basis, "refine")

    def test_project_in_span(self, rng):
        target = uniform_knots(3, 12)
        c = curve(target, rng.normal(size=(12, 2)))
        assert np.abs(reexpress(c, target, "project").cps - c.cps).max() < 1e-10

    def test_project_vs_refine(self):
        g = simplify_side(BOTTOM, CoarseSpec(2))
        a = reexpress(g, BOTTOM.basis, "refine")
        b = reexpress(g, BOTTOM.basis, "project")
        assert l2_distance(a, b) < l2_distance(g, BOTTOM)

    def test_project_non_nested_stays_close(self):
        g = simplify_side(BOTTOM, CoarseSpec(4, 6))
        b = reexpress(g, BOTTOM.basis, "project")
        assert l2_distance(b, g) < l2_distance(g, BOTTOM)
        assert np.array_equal(b.cps[[0, -1]], g.cps[[0, -1]])

    def test_surface_refine(self):
        kv = uniform_knots(1, 2)
        s = Patch(TensorBasis((kv, kv)), np.array([[0, 0, 0], [0, 1, 0.2], [1, 0, 0.1], [1, 1, 1.0]]))
        fine = reexpress(s, TensorBasis((uniform_knots(2, 5), uniform_knots(3, 6))))
        ax = [np.linspace(0, 1, 9)] * 2
        assert np.abs(s.grid_eval(ax) - fine.grid_eval(ax)).max() < 1e-12


def _sides(shell):
    return [side for _, side in shell.items()]


@pytest.mark.parametrize("name,shell", [("puzzle", PUZZLE), ("dent", concave_dent()),
                                        ("quad", mild_quad())])
@pytest.mark.parametrize("q", [2, 3])
def test_speed_preservation(name, shell, q):
    xs = np.linspace(0, 1, 100)
    for side in _sides(shell):
        spec = CoarseSpec(q)
        if spec.num_basis >= side.basis.kvs[0].n:
            continue
        l2 = reexpress(simplify_side(side, spec), side.basis, "project")
        chord = reexpress(chord_simplification(side), side.basis)
        ref = side.grid_eval([xs])
        err_l2 = np.linalg.norm(ref - l2.grid_eval([xs]), axis=1).max()
        err_chord = np.linalg.norm(ref - chord.grid_eval([xs]), axis=1).max()
        if err_chord < 1e-12:
            continue  # straight side: both are exact
        assert err_l2 < err_chord


class TestInitialDomain:
    def test_mild_quad_linear(self):
        initial, shell0 = build_initial_domain(mild_quad(), CoarseSpec(1))
        assert check_bijective(initial).bijective
        for key, side in shell0.items():
            assert np.array_equal(initial.side(*key).cps, side.cps)

    def test_puzzle_q4_fails(self):
        with pytest.raises(InitialDomainError) as info:
            build_initial_domain(PUZZLE, CoarseSpec(4, 6))
        assert info.value.quality.m <= 0

    def test_puzzle_coarsest_cubic(self):
        initial, _ = build_initial_domain(PUZZLE, CoarseSpec(3))
        assert check_bijective(initial).bijective
        assert det_grid(initial, [np.linspace(0, 1, 100)] * 2).min() > 0

    def test_corners_preserved(self):
        _, shell0 = build_initial_domain(PUZZLE, CoarseSpec(2))
        for key, side in PUZZLE.items():
            assert np.array_equal(shell0[key].cps[[0, -1]], side.cps[[0, -1]])

    def test_opposite_specs_must_match(self):
        specs = {(0, 0): CoarseSpec(2), (0, 1): CoarseSpec(3),
                 (1, 0): CoarseSpec(2), (1, 1): CoarseSpec(2)}
        with pytest.raises(DomainError, match="identical"):
            build_initial_domain(PUZZLE, specs)

    def test_dented_cube(self):
        initial, shell0 = build_initial_domain(dented_cube(), CoarseSpec(1))
        assert check_bijective(initial).bijective
        shell0.check_compatible()
