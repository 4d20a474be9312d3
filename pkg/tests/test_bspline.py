import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.interpolate import BSpline

from isodeform.bspline import (KnotVector, TensorBasis, basis_table, collocation, eval_basis,
                               evaluate, gauss_rule, refine_to, span_quadrature, uniform_knots)
from isodeform.errors import DomainError, IncompatibleSpaceError


@st.composite
def knot_vectors(draw, max_degree=4, min_degree=0):
    p = draw(st.integers(min_degree, max_degree))
    interior = draw(st.lists(st.floats(0.01, 0.99), max_size=8))
    interior = sorted(round(x, 3) for x in interior)
    # cap multiplicity at p (at least one occurrence for p = 0)
    kept = []
    for x in interior:
        if kept.count(x) < max(p, 1):
            kept.append(x)
    knots = [0.0] * (p + 1) + kept + [1.0] * (p + 1)
    return KnotVector(p, np.array(knots))


def scipy_values(kv, x):
    n = kv.n
    return np.array([BSpline(kv.array, np.eye(n)[i], kv.degree)(x) for i in range(n)])


class TestKnotVector:
    def test_counts(self):
        kv = uniform_knots(3, 10)
        assert kv.n == 10
        assert kv.num_spans == 7
        assert np.allclose(kv.mesh, np.linspace(0, 1, 8))

    def test_rejects_decreasing(self):
        with pytest.raises(DomainError, match="non-decreasing"):
            KnotVector(1, np.array([0, 0, 0.6, 0.4, 1, 1]))

    def test_rejects_unclamped(self):
        with pytest.raises(DomainError):
            KnotVector(2, np.array([0, 0, 0.5, 1, 1, 1]))

    def test_greville_of_linear_is_identity(self):
        kv = uniform_knots(1, 5)
        assert np.allclose(kv.greville(), np.linspace(0, 1, 5))

    def test_contains_after_elevation_and_insertion(self):
        coarse = uniform_knots(1, 2)
        assert uniform_knots(3, 10).contains(coarse)
        assert not uniform_knots(2, 6).contains(uniform_knots(3, 4))


class TestEvalBasis:
    def test_linear_midpoint(self):
        first, table = eval_basis(KnotVector(1, np.array([0, 0, 1, 1.0])), 0.5)
        assert first == 0
        assert np.allclose(table[0], [0.5, 0.5])

    def test_bernstein_quadratic(self):
        _, table = eval_basis(KnotVector(2, np.array([0, 0, 0, 1, 1, 1.0])), 0.5)
        assert np.allclose(table[0], [0.25, 0.5, 0.25], atol=1e-15)

    def test_right_end_uses_left_limit(self):
        kv = uniform_knots(3, 7)
        first, table = eval_basis(kv, 1.0)
        assert first == kv.n - 4
        assert table[0, -1] == pytest.approx(1.0)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            eval_basis(uniform_knots(2, 4), 1.5)

    @pytest.mark.parametrize("p,n", [(1, 4), (2, 7), (3, 9), (4, 6)])
    def test_matches_scipy(self, p, n):
        kv = uniform_knots(p, n)
        xs = np.linspace(0, 1, 37)
        ours = collocation(kv, xs)
        ref = np.array([scipy_values(kv, x) for x in xs])
        assert np.allclose(ours, ref, atol=1e-14)

    def test_derivatives_match_scipy(self):
        kv = KnotVector(3, np.array([0, 0, 0, 0, 0.2, 0.5, 0.5, 0.8, 1, 1, 1, 1.0]))
        xs = np.linspace(0.01, 0.99, 23)
        for k in (1, 2):
            ours = collocation(kv, xs, deriv=k)
            ref = np.array([[BSpline(kv.array, np.eye(kv.n)[i], 3).derivative(k)(x)
                             for i in range(kv.n)] for x in xs])
            assert np.allclose(ours, ref, atol=1e-10)

    @given(knot_vectors(), st.floats(0, 1))
    def test_partition_of_unity(self, kv, x):
        _, table = eval_basis(kv, x)
        assert abs(table[0].sum() - 1) <= 1e-13
        assert np.all(table[0] >= -1e-15) and np.all(table[0] <= 1 + 1e-15)

    @given(knot_vectors(), st.floats(0.001, 0.999))
    def test_derivatives_sum_to_zero(self, kv, x):
        if kv.degree == 0:
            return
        _, table = eval_basis(kv, x, 1)
        scale = max(1.0, np.abs(table[1]).max())
        assert abs(table[1].sum()) <= 1e-12 * scale

    def test_finite_difference_derivative(self):
        kv = uniform_knots(3, 8)
        h = 1e-5
        for x in np.linspace(0.05, 0.95, 11):
            fd = (collocation(kv, [x + h]) - collocation(kv, [x - h])) / (2 * h)
            d1 = collocation(kv, [x], deriv=1)
            assert np.abs(fd - d1).max() < 1e-6

    def test_table_shape(self):
        kv = uniform_knots(2, 5)
        first, table = basis_table(kv, np.array([0.0, 0.3, 1.0]), 2)
        assert table.shape == (3, 3, 3)
        assert list(first) == [0, 0, 2]


class TestRefinement:
    def test_linear_to_cubic(self):
        coarse = uniform_knots(1, 2)
        target = uniform_knots(3, 10)
        c = np.array([[0.0, 1.0], [2.0, -1.0]])
        fine = refine_to(coarse, c, target)
        xs = np.linspace(0, 1, 100)
        assert np.abs(evaluate(coarse, c, xs) - evaluate(target, fine, xs)).max() < 1e-12

    def test_identity(self, rng):
        kv = uniform_knots(3, 9)
        c = rng.normal(size=(9, 2))
        assert np.allclose(refine_to(kv, c, kv), c, atol=1e-13)

    def test_not_nested(self):
        with pytest.raises(IncompatibleSpaceError):
            refine_to(uniform_knots(3, 4), np.zeros((4, 2)), uniform_knots(2, 8))

    @given(knot_vectors(max_degree=3, min_degree=1), st.integers(0, 2), st.integers(1, 3), st.integers(0, 10**6))
    def test_exactness(self, kv, raise_by, splits, seed):
        coeffs = np.random.default_rng(seed).normal(size=(kv.n, 2))
        target = kv.elevated(raise_by).uniformly_refined(splits)
        fine = refine_to(kv, coeffs, target)
        xs = np.linspace(0, 1, 100)
        err = np.abs(evaluate(kv, coeffs, xs) - evaluate(target, fine, xs)).max()
        assert err <= 1e-12 * max(1.0, np.abs(coeffs).max())


class TestQuadrature:
    def test_one_point(self):
        rule = gauss_rule(1)
        assert np.allclose(rule.nodes, [0]) and np.allclose(rule.weights, [2])

    def test_two_point(self):
        rule = gauss_rule(2)
        assert np.allclose(sorted(rule.nodes), [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
        assert np.allclose(rule.weights, [1, 1])

    def test_x4(self):
        rule = gauss_rule(3)
        assert abs(np.sum(rule.weights * rule.nodes ** 4) - 0.4) < 1e-14

    def test_zero_points(self):
        with pytest.raises(DomainError):
            gauss_rule(0)

    @pytest.mark.parametrize("n", range(1, 11))
    def test_monomial_exactness(self, n):
        rule = gauss_rule(n)
        assert abs(rule.weights.sum() - 2) < 1e-14
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            got = np.sum(rule.weights * rule.nodes ** k)
            assert abs(got - exact) <= 1e-13 * max(1.0, exact)

    def test_span_quadrature_integrates_basis(self):
        kv = uniform_knots(2, 6)
        pts, wts = span_quadrature(kv)
        integrals = collocation(kv, pts.ravel()).T @ wts.ravel()
        # int B_i = (t_{i+p+1} - t_i) / (p + 1)
        t = kv.array
        exact = (t[3:] - t[:-3]) / 3
        assert np.allclose(integrals, exact, atol=1e-15)


def test_tensor_basis_size():
    b = TensorBasis((uniform_knots(2, 4), uniform_knots(3, 5), uniform_knots(1, 3)))
    assert b.size == 60 and b.shape == (4, 5, 3)
    assert b.boundary_mask().sum() == 60 - 2 * 3 * 1
