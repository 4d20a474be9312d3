"""Neo-Hookean and linear elasticity on B-spline patches.

Degrees of freedom are numbered ``basis_index * d + component``. Physical
gradients are obtained per quadrature point through the inverse of the
reference Jacobian; the reference map itself is never inverted globally.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse

from . import kernels
from .bspline import TensorBasis, basis_table, span_quadrature
from .errors import DomainError, IncompatibleSpaceError, NonBijectiveStateError
from .geometry import Patch

__all__ = [
    "MaterialParams",
    "Kinematics",
    "DiscreteField",
    "AssembledSystem",
    "ElementTables",
    "lame_from_E_nu",
    "neo_hookean_stress",
    "elasticity_tensor",
    "linear_stress",
    "element_tables",
    "patch_residual",
    "patch_linear_matrix",
    "patch_mass_matrix",
    "assemble_residual",
    "assemble_tangent",
    "assemble_linear",
    "dofs_of",
]


def lame_from_E_nu(E: float, nu: float) -> tuple:
    """Lame constants ``(lambda, mu)`` from Young's modulus and Poisson's ratio."""
    E, nu = float(E), float(nu)
    if not E > 0:
        raise DomainError(f"Young's modulus must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise DomainError(
            f"Poisson's ratio must lie in [0, 0.5), got {nu}; the incompressible "
            "limit needs a mixed formulation")
    lam = nu * E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass(frozen=True)
class MaterialParams:
    E: float = 1.0
    nu: float = 0.49

    def __post_init__(self):
        lame_from_E_nu(self.E, self.nu)

    @property
    def lam(self) -> float:
        return lame_from_E_nu(self.E, self.nu)[0]

    @property
    def mu(self) -> float:
        return lame_from_E_nu(self.E, self.nu)[1]


@dataclass(frozen=True)
class Kinematics:
    F: np.ndarray
    C: np.ndarray
    J: float
    Cinv: np.ndarray
    lnJ: float

    @classmethod
    def from_F(cls, F) -> "Kinematics":
        F = np.asarray(F, dtype=float)
        C = F.T @ F
        J = float(np.linalg.det(F))
        if J <= 0:
            return cls(F, C, J, np.full_like(C, np.nan), float("nan"))
        return cls(F, C, J, np.linalg.inv(C), float(np.log(J)))

    @classmethod
    def from_grad_u(cls, grad_u) -> "Kinematics":
        grad_u = np.asarray(grad_u, dtype=float)
        return cls.from_F(np.eye(grad_u.shape[0]) + grad_u)


def _require_positive(kin: Kinematics):
    if not kin.J > 0:
        raise NonBijectiveStateError(f"det F = {kin.J} <= 0", min_jacobian=kin.J)


def neo_hookean_stress(kin: Kinematics, mat: MaterialParams) -> np.ndarray:
    """Second Piola-Kirchhoff stress ``lam ln J C^-1 + mu (I - C^-1)``."""
    _require_positive(kin)
    eye = np.eye(kin.F.shape[0])
    return mat.lam * kin.lnJ * kin.Cinv + mat.mu * (eye - kin.Cinv)


def elasticity_tensor(kin: Kinematics, mat: MaterialParams) -> np.ndarray:
    """Material tangent ``2 dS/dC`` as a ``(d, d, d, d)`` array."""
    _require_positive(kin)
    Ci = kin.Cinv
    c = mat.mu - mat.lam * kin.lnJ
    return (mat.lam * np.einsum("ab,cd->abcd", Ci, Ci)
            + c * (np.einsum("ac,bd->abcd", Ci, Ci) + np.einsum("ad,bc->abcd", Ci, Ci)))


def linear_stress(grad_u, mat: MaterialParams) -> np.ndarray:
    """Hooke's law on the symmetric part of ``grad_u``."""
    grad_u = np.asarray(grad_u, dtype=float)
    eps = 0.5 * (grad_u + grad_u.T)
    return mat.lam * np.trace(eps) * np.eye(grad_u.shape[0]) + 2.0 * mat.mu * eps


@dataclass(frozen=True, eq=False)
class ElementTables:
    """Per-element quadrature data of a tensor basis.

    ``idx[e, a]`` is the global basis index of local function ``a`` on
    element ``e``; ``vals``/``grads`` hold parametric values and gradients
    at the ``nq`` Gauss points; ``weights`` include the span lengths.
    """

    idx: np.ndarray
    vals: np.ndarray
    grads: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    elem_shape: tuple

    @property
    def num_elements(self) -> int:
        return self.idx.shape[0]


@lru_cache(maxsize=32)
def element_tables(basis: TensorBasis, npts: tuple | None = None) -> ElementTables:
    """Gauss data with ``p + 1`` points per direction unless ``npts`` is given."""
    d = basis.dim
    per = []
    for k, kv in enumerate(basis.kvs):
        n = None if npts is None else npts[k]
        pts, wts = span_quadrature(kv, n)
        ns, nq = pts.shape
        first, tab = basis_table(kv, pts.ravel(), 1)
        tab = tab.reshape(ns, nq, 2, kv.degree + 1)
        first = first.reshape(ns, nq)[:, 0]
        per.append((pts, wts, tab, first))

    ns = [p[0].shape[0] for p in per]
    nq = [p[0].shape[1] for p in per]
    nl = [kv.degree + 1 for kv in basis.kvs]
    # axes layout: (e_0..e_{d-1}, q_0..q_{d-1}, a_0..a_{d-1})
    full = ns + nq + nl

    def factor(k, deriv):
        tab = per[k][2][:, :, deriv, :]
        shape = [1] * (3 * d)
        shape[k], shape[d + k], shape[2 * d + k] = ns[k], nq[k], nl[k]
        return tab.reshape(shape)

    vals = np.ones(full)
    for k in range(d):
        vals = vals * factor(k, 0)
    grads = []
    for m in range(d):
        g = np.ones(full)
        for k in range(d):
            g = g * factor(k, 1 if k == m else 0)
        grads.append(g)
    E, Q, L = int(np.prod(ns)), int(np.prod(nq)), int(np.prod(nl))
    vals = vals.reshape(E, Q, L)
    grads = np.stack(grads, axis=-1).reshape(E, Q, L, d)

    w = np.ones(ns + nq)
    pts = []
    for k in range(d):
        shape = [1] * (2 * d)
        shape[k], shape[d + k] = ns[k], nq[k]
        w = w * per[k][1].reshape(shape)
        pts.append(np.broadcast_to(per[k][0].reshape(shape), ns + nq))
    weights = w.reshape(E, Q)
    points = np.stack([p.reshape(E, Q) for p in pts], axis=-1)

    sub = []
    for k in range(d):
        shape = [1] * (2 * d)
        shape[k], shape[d + k] = ns[k], nl[k]
        sub.append(per[k][3].reshape([ns[k] if i == k else 1 for i in range(2 * d)])
                   + np.arange(nl[k]).reshape([nl[k] if i == d + k else 1 for i in range(2 * d)]))
    sub = np.broadcast_arrays(*sub)
    idx = np.ravel_multi_index(tuple(sub), basis.shape).reshape(E, L)
    for a in (idx, vals, grads, weights, points):
        a.setflags(write=False)
    return ElementTables(idx, vals, grads, weights, points, tuple(ns))


def dofs_of(basis_indices, d: int) -> np.ndarray:
    """Vector dofs of the given basis indices (last axis expanded by ``d``)."""
    idx = np.asarray(basis_indices)
    return (idx[..., None] * d + np.arange(d)).reshape(*idx.shape[:-1], idx.shape[-1] * d)


def _local(tab: ElementTables, arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr[tab.idx])


def _scatter_matrix(tab: ElementTables, Kloc: np.ndarray, n: int, d: int):
    ldofs = dofs_of(tab.idx, d)  # (E, nl*d)
    nld = ldofs.shape[1]
    rows = np.repeat(ldofs, nld, axis=1).ravel()
    cols = np.tile(ldofs, (1, nld)).ravel()
    mat = scipy.sparse.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(n * d, n * d))
    return mat.tocsr()


def _check_field(initial: Patch, U: np.ndarray):
    if initial.dim != initial.phys_dim:
        raise IncompatibleSpaceError("elasticity needs a volumetric patch (d_par == d_phys)")
    U = np.asarray(U, dtype=float).reshape(initial.basis.size, initial.phys_dim)
    return U


def patch_residual(initial: Patch, U, mat: MaterialParams, tangent: bool = True):
    """Full residual vector and (optionally) tangent matrix of one patch.

    Returns ``(r, K)`` over all ``n * d`` dofs, ``K`` a CSR matrix or None.
    Raises :class:`NonBijectiveStateError` naming the first element with
    ``det F <= 0``.
    """
    U = _check_field(initial, U)
    tab = element_tables(initial.basis)
    n, d = U.shape
    r, K, jmin = kernels.neohooke(_local(tab, initial.cps), _local(tab, U), tab.grads,
                                  tab.weights, mat.lam, mat.mu, tangent)
    if np.any(jmin <= 0.0):
        e = int(np.argmax(jmin <= 0.0))
        raise NonBijectiveStateError(
            f"det F = {jmin[e]:.3e} <= 0 on element {e}", element=e,
            min_jacobian=float(jmin.min()))
    rvec = np.bincount(dofs_of(tab.idx, d).ravel(), weights=r.ravel(), minlength=n * d)
    Kmat = _scatter_matrix(tab, K, n, d) if tangent else None
    return rvec, Kmat


def patch_linear_matrix(domain: Patch, mat: MaterialParams):
    """Hooke stiffness matrix over all dofs of ``domain``'s geometry."""
    _check_field(domain, domain.cps)
    tab = element_tables(domain.basis)
    n, d = domain.cps.shape
    K, dmin = kernels.linear(_local(tab, domain.cps), tab.grads, tab.weights, mat.lam, mat.mu)
    if np.any(dmin <= 0.0):
        e = int(np.argmax(dmin <= 0.0))
        raise NonBijectiveStateError(f"domain folds on element {e}", element=e,
                                     min_jacobian=float(dmin.min()))
    return _scatter_matrix(tab, K, n, d)


def patch_mass_matrix(domain: Patch):
    """Scalar mass matrix ``int B_a B_b dx`` over the patch."""
    tab = element_tables(domain.basis)
    n = domain.basis.size
    Mloc = kernels.mass(_local(tab, domain.cps), tab.vals, tab.grads, tab.weights)
    nl = tab.idx.shape[1]
    rows = np.repeat(tab.idx, nl, axis=1).ravel()
    cols = np.tile(tab.idx, (1, nl)).ravel()
    return scipy.sparse.coo_matrix((Mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()


@dataclass(eq=False)
class DiscreteField:
    """Displacement coefficients on the basis of the initial patch."""

    basis: TensorBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c.reshape(self.basis.size, -1)
        if c.shape[0] != self.basis.size:
            raise DomainError(f"{c.shape[0]} coefficients for basis of size {self.basis.size}")
        self.coeffs = c

    @classmethod
    def zeros(cls, basis: TensorBasis, d: int) -> "DiscreteField":
        return cls(basis, np.zeros((basis.size, d)))

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.basis.boundary_mask())

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.basis.boundary_mask())

    def interior_dofs(self) -> np.ndarray:
        return dofs_of(self.interior, self.dim)

    def boundary_dofs(self) -> np.ndarray:
        return dofs_of(self.boundary, self.dim)


@dataclass(eq=False)
class AssembledSystem:
    """Interior block of a stiffness matrix and the matching right-hand side.

    ``coupling`` is the interior-by-boundary block so callers can fold
    prescribed boundary increments into ``rhs``.
    """

    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    dof_map: np.ndarray
    coupling: scipy.sparse.csr_matrix
    boundary_dofs: np.ndarray


def _split(K, r, field: DiscreteField) -> AssembledSystem:
    I = field.interior_dofs()
    B = field.boundary_dofs()
    K = K.tocsr()
    return AssembledSystem(K[I][:, I].tocsr(), -r[I], I, K[I][:, B].tocsr(), B)


def _check_basis(field: DiscreteField, patch: Patch):
    if field.basis != patch.basis:
        raise IncompatibleSpaceError("field and patch use different bases")


def assemble_residual(field: DiscreteField, initial: Patch, mat: MaterialParams) -> np.ndarray:
    """Weak residual tested against every interior vector basis function."""
    _check_basis(field, initial)
    r, _ = patch_residual(initial, field.coeffs, mat, tangent=False)
    return r[field.interior_dofs()]


def assemble_tangent(field: DiscreteField, initial: Patch, mat: MaterialParams) -> AssembledSystem:
    """Tangent (directional derivative) on interior dofs, ``rhs = -residual``."""
    _check_basis(field, initial)
    r, K = patch_residual(initial, field.coeffs, mat, tangent=True)
    return _split(K, r, field)


def assemble_linear(domain: Patch, mat: MaterialParams) -> AssembledSystem:
    """Linear elasticity stiffness on the (possibly deformed) ``domain``."""
    K = patch_linear_matrix(domain, mat)
    field = DiscreteField.zeros(domain.basis, domain.phys_dim)
    return _split(K, np.zeros(K.shape[0]), field)
