"""Clamped B-spline bases, evaluation, refinement and Gauss quadrature.

Knot vectors live on [0, 1] and are clamped: the first and last knot are
repeated ``degree + 1`` times. Evaluation at ``xi == 1`` uses the left limit
so that the last basis function equals one there.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import factorial, prod
from typing import Sequence

import numpy as np
import scipy.sparse

from .errors import DomainError, IncompatibleSpaceError

__all__ = [
    "KnotVector",
    "TensorBasis",
    "QuadratureRule",
    "uniform_knots",
    "eval_basis",
    "basis_table",
    "collocation",
    "evaluate",
    "refine_to",
    "gauss_rule",
    "span_quadrature",
]

_KNOT_TOL = 1e-12


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot vector on [0, 1] together with its degree.

    Attributes
    ----------
    degree : int
        Polynomial degree ``p``.
    knots : tuple of float
        Non-decreasing knots, first and last repeated ``p + 1`` times.
        Interior multiplicities are at most ``p`` (the basis stays C^0).
    """

    degree: int
    knots: tuple

    def __post_init__(self):
        p = int(self.degree)
        if p < 0:
            raise DomainError(f"degree must be non-negative, got {self.degree}")
        k = tuple(float(x) for x in self.knots)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", k)
        arr = np.asarray(k)
        if arr.ndim != 1 or arr.size < 2 * (p + 1):
            raise DomainError(
                f"need at least {2 * (p + 1)} knots for degree {p}, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("knots must be finite")
        if np.any(np.diff(arr) < 0):
            raise DomainError("knots non-decreasing: violated")
        if np.any(arr[: p + 1] != 0.0) or np.any(arr[-(p + 1):] != 1.0):
            raise DomainError(
                f"knots must be clamped on [0, 1]: first and last {p + 1} knots "
                "must equal 0 and 1")
        inner = arr[p + 1: arr.size - p - 1]
        if inner.size and (inner[0] <= 0.0 or inner[-1] >= 1.0):
            raise DomainError("interior knots must lie strictly inside (0, 1)")
        if inner.size:
            _, counts = np.unique(inner, return_counts=True)
            if p > 0 and counts.max() > p:
                raise DomainError(
                    f"interior knot multiplicity {counts.max()} exceeds degree {p}")

    @property
    def p(self) -> int:
        return self.degree

    @cached_property
    def array(self) -> np.ndarray:
        a = np.asarray(self.knots, dtype=float)
        a.setflags(write=False)
        return a

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @cached_property
    def mesh(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.array)

    @property
    def num_spans(self) -> int:
        return self.mesh.size - 1

    @cached_property
    def span_indices(self) -> np.ndarray:
        """Knot index ``i`` of every non-empty span ``[t_i, t_{i+1})``."""
        t = self.array
        idx = np.arange(self.degree, self.n)
        return idx[t[idx] < t[idx + 1]]

    def multiplicity(self, x: float) -> int:
        return int(np.count_nonzero(np.abs(self.array - x) < _KNOT_TOL))

    def interior_knots(self) -> np.ndarray:
        p = self.degree
        return self.array[p + 1: len(self.knots) - p - 1]

    def greville(self) -> np.ndarray:
        """Knot averages; the identity map has these as coefficients."""
        p, t = self.degree, self.array
        if p == 0:
            return 0.5 * (t[:-1] + t[1:])
        return np.array([t[i + 1: i + p + 1].mean() for i in range(self.n)])

    def find_span(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        spans = np.searchsorted(self.array, xs, side="right") - 1
        # left-limit convention at the right end
        return np.clip(spans, self.degree, self.n - 1)

    def elevated(self, t: int) -> "KnotVector":
        """Knot vector of the degree-elevated space (every multiplicity + t)."""
        if t < 0:
            raise DomainError("elevation must be non-negative")
        vals, counts = np.unique(self.array, return_counts=True)
        knots = np.repeat(vals, counts + t)
        return KnotVector(self.degree + t, tuple(knots))

    def refined(self, new_knots: Sequence[float]) -> "KnotVector":
        """Knot vector with ``new_knots`` inserted."""
        knots = np.sort(np.concatenate([self.array, np.asarray(new_knots, float)]))
        return KnotVector(self.degree, tuple(knots))

    def uniformly_refined(self, splits: int = 2) -> "KnotVector":
        """Split every span into ``splits`` equal parts."""
        m = self.mesh
        new = [a + (b - a) * k / splits for a, b in zip(m[:-1], m[1:])
               for k in range(1, splits)]
        return self.refined(new)

    def contains(self, other: "KnotVector") -> bool:
        """True if the spline space of ``other`` is a subspace of this one."""
        t = self.degree - other.degree
        if t < 0:
            return False
        for x in np.unique(other.interior_knots()):
            need = other.multiplicity(x) + t
            if self.multiplicity(x) < need:
                return False
        return True

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, n={self.n}, spans={self.num_spans})"


def uniform_knots(degree: int, num_basis: int, continuity: int | None = None) -> KnotVector:
    """Clamped uniform knot vector with ``num_basis`` functions.

    With ``continuity`` given, interior knots are repeated ``degree -
    continuity`` times and ``num_basis`` must be compatible with that.
    """
    p = int(degree)
    mult = 1 if continuity is None else p - int(continuity)
    if num_basis < p + 1:
        raise DomainError(f"need at least {p + 1} basis functions for degree {p}")
    n_inner = num_basis - p - 1
    if n_inner % mult:
        raise DomainError(f"{num_basis} functions incompatible with multiplicity {mult}")
    n_el = n_inner // mult + 1
    inner = np.repeat(np.arange(1, n_el) / n_el, mult)
    knots = np.concatenate([np.zeros(p + 1), inner, np.ones(p + 1)])
    return KnotVector(p, tuple(knots))


@dataclass(frozen=True)
class TensorBasis:
    """Tensor product of one to three univariate bases."""

    kvs: tuple

    def __post_init__(self):
        kvs = tuple(self.kvs)
        if not 1 <= len(kvs) <= 3:
            raise DomainError("tensor bases have 1 to 3 directions")
        if not all(isinstance(kv, KnotVector) for kv in kvs):
            raise TypeError("TensorBasis expects KnotVector factors")
        object.__setattr__(self, "kvs", kvs)

    @property
    def dim(self) -> int:
        return len(self.kvs)

    @property
    def shape(self) -> tuple:
        return tuple(kv.n for kv in self.kvs)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @property
    def degrees(self) -> tuple:
        return tuple(kv.degree for kv in self.kvs)

    def without(self, direction: int) -> "TensorBasis":
        """Basis of the side where ``direction`` is held fixed."""
        return TensorBasis(tuple(kv for k, kv in enumerate(self.kvs) if k != direction))

    def greville_grid(self) -> np.ndarray:
        """Greville points of all basis functions, lexicographic (C order)."""
        axes = np.meshgrid(*[kv.greville() for kv in self.kvs], indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def boundary_mask(self) -> np.ndarray:
        """Flat boolean mask of basis functions that touch the boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[k] = 0
            mask[tuple(sl)] = True
            sl[k] = -1
            mask[tuple(sl)] = True
        return mask.ravel()


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)


def _check_points(xs: np.ndarray) -> None:
    if np.any(~np.isfinite(xs)) or np.any(xs < 0.0) or np.any(xs > 1.0):
        bad = xs[(xs < 0.0) | (xs > 1.0) | ~np.isfinite(xs)][0]
        raise DomainError(f"parameter {bad!r} outside [0, 1]")


def basis_table(kv: KnotVector, xs, deriv_order: int = 0):
    """Non-vanishing basis functions and derivatives at many points.

    Returns
    -------
    first : ndarray of int, shape (npts,)
        Index of the first non-vanishing function at each point.
    table : ndarray, shape (npts, deriv_order + 1, p + 1)
        ``table[j, k, r]`` is the ``k``-th derivative of function
        ``first[j] + r`` at ``xs[j]``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    _check_points(xs)
    p = kv.degree
    nd = int(deriv_order)
    if nd < 0 or nd > p:
        raise DomainError(f"derivative order {nd} outside [0, {p}]")
    t = kv.array
    spans = kv.find_span(xs)
    npts = xs.size

    ndu = np.zeros((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((npts, p + 1))
    right = np.zeros((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xs - t[spans + 1 - j]
        right[:, j] = t[spans + j] - xs
        saved = np.zeros(npts)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((npts, nd + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    for r in range(p + 1):
        a = np.zeros((npts, 2, p + 1))
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, nd + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    for k in range(1, nd + 1):
        ders[:, k, :] *= factorial(p) / factorial(p - k)
    return spans - p, ders


def eval_basis(kv: KnotVector, xi: float, deriv_order: int = 0):
    """Non-vanishing basis functions of ``kv`` at a single point.

    Returns ``(first_index, table)`` with ``table`` of shape
    ``(deriv_order + 1, p + 1)``; row ``k`` holds ``k``-th derivatives.

    >>> kv = KnotVector(2, (0, 0, 0, 1, 1, 1))
    >>> eval_basis(kv, 0.5)[1][0]
    array([0.25, 0.5 , 0.25])
    """
    xi = float(xi)
    first, table = basis_table(kv, [xi], deriv_order)
    return int(first[0]), table[0]


def collocation(kv: KnotVector, xs, deriv: int = 0, dense: bool = True):
    """Matrix ``A[j, i] = d^deriv B_i(xs[j])``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    first, table = basis_table(kv, xs, deriv)
    p = kv.degree
    rows = np.repeat(np.arange(xs.size), p + 1)
    cols = (first[:, None] + np.arange(p + 1)).ravel()
    mat = scipy.sparse.csr_matrix(
        (table[:, deriv, :].ravel(), (rows, cols)), shape=(xs.size, kv.n))
    return mat.toarray() if dense else mat


def evaluate(kv: KnotVector, coeffs, xs, deriv: int = 0) -> np.ndarray:
    """Evaluate a univariate spline (coefficients along axis 0)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != kv.n:
        raise DomainError(f"expected {kv.n} coefficients, got {coeffs.shape[0]}")
    return collocation(kv, xs, deriv) @ coeffs


def refine_to(kv: KnotVector, coeffs, target: KnotVector) -> np.ndarray:
    """Represent a spline on the finer space ``target`` without changing it.

    Handles knot insertion and degree elevation at once. Each target span
    holds a single polynomial, so the target coefficients that act on a
    span follow from a local square solve against the coarse function
    sampled on that span.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != kv.n:
        raise DomainError(f"expected {kv.n} coefficients, got {coeffs.shape[0]}")
    if not target.contains(kv):
        raise IncompatibleSpaceError(
            f"space of degree {target.degree} with {target.n} functions does not "
            f"contain the space of degree {kv.degree} with {kv.n} functions")
    if target == kv:
        return coeffs.copy()
    q = target.degree
    t = target.array
    out = np.zeros((target.n,) + coeffs.shape[1:])
    # a function that barely reaches into a span is poorly determined there,
    # so each coefficient is taken from the span where its function is largest
    best = np.full(target.n, -1.0)
    for s in target.span_indices:
        a, b = t[s], t[s + 1]
        nodes = a + (b - a) * 0.5 * (1.0 - np.cos(np.pi * (np.arange(q + 1) + 0.5) / (q + 1)))
        first, table = basis_table(target, nodes, 0)
        local = np.linalg.solve(table[:, 0, :], evaluate(kv, coeffs, nodes))
        idx = np.arange(first[0], first[0] + q + 1)
        weight = table[:, 0, :].max(axis=0)
        take = weight > best[idx]
        out[idx[take]] = local[take]
        best[idx[take]] = weight[take]
    return out


@lru_cache(maxsize=64)
def gauss_rule(n: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``n`` points on [-1, 1]."""
    n = int(n)
    if n < 1:
        raise DomainError(f"quadrature needs at least one point, got {n}")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


def span_quadrature(kv: KnotVector, npts: int | None = None, breaks=None):
    """Gauss points and weights on every span of ``breaks``.

    ``breaks`` defaults to the distinct knots of ``kv``; ``npts`` defaults
    to ``p + 1``. Returns ``(points, weights)`` with shape
    ``(nspans, npts)`` each.
    """
    rule = gauss_rule(kv.degree + 1 if npts is None else npts)
    m = kv.mesh if breaks is None else np.unique(np.asarray(breaks, dtype=float))
    a, b = m[:-1, None], m[1:, None]
    pts = 0.5 * (a + b) + 0.5 * (b - a) * rule.nodes[None, :]
    wts = 0.5 * (b - a) * rule.weights[None, :]
    return np.clip(pts, 0.0, 1.0), wts
