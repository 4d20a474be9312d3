"""Incremental loading solvers for the boundary-driven elastic deformation.

All solvers act on a :class:`DeformProblem`, which glues one or several
initial patches into a global displacement vector of shape
``(n_global, d)``. Boundary rows are prescribed; the rest are unknowns.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import kernels
from .elasticity import (DiscreteField, MaterialParams, dofs_of, element_tables,
                         patch_linear_matrix, patch_mass_matrix, patch_residual)
from .errors import (DivergenceError, DomainError, IncompatibleSpaceError,
                     NonBijectiveStateError, StallError)
from .geometry import BoundaryShell, Patch, check_bijective

log = logging.getLogger(__name__)

__all__ = [
    "DeformConfig",
    "DeformProblem",
    "StepRecord",
    "SolverReport",
    "DeformResult",
    "dirichlet_from_shells",
    "adapt_scale",
    "newton_iterate",
    "load_step",
    "solve_incremental_newton",
    "solve_ndil",
    "solve_ldil",
    "solve",
    "compose_final",
    "deform_patch",
]

STRATEGIES = ("incremental-newton", "ndil", "ldil")
POLICIES = ("fixed", "adaptive-fixed", "greedy")
DEFAULT_NU = {2: 0.49, 3: 0.46}
_ALIASES = {"newton": "incremental-newton", "adaptive": "adaptive-fixed"}


@dataclass
class DeformConfig:
    N: int = 10
    epsilon: float = 1e-9
    max_newton_iters: int = 25
    strategy: str = "ndil"
    stepsize_policy: str = "adaptive-fixed"
    max_halvings: int = 10
    bijectivity_strategy: str = "gauss"
    material: MaterialParams | None = None
    stand_alone: bool = False

    def __post_init__(self):
        self.strategy = _ALIASES.get(self.strategy, self.strategy)
        self.stepsize_policy = _ALIASES.get(self.stepsize_policy, self.stepsize_policy)
        if int(self.N) < 1:
            raise DomainError(f"N must be at least 1, got {self.N}")
        self.N = int(self.N)
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if int(self.max_halvings) < 1:
            raise DomainError("max_halvings must be at least 1")
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy!r}; use one of {STRATEGIES}")
        if self.stepsize_policy not in POLICIES:
            raise DomainError(f"unknown stepsize policy {self.stepsize_policy!r}")

    def material_for(self, d: int) -> MaterialParams:
        """The configured material, or E = 1 with nu = 0.49 (2D) / 0.46 (3D)."""
        if self.material is not None:
            return self.material
        return MaterialParams(1.0, DEFAULT_NU[d])

    @property
    def halvings_allowed(self) -> int:
        return 0 if self.stepsize_policy == "fixed" else int(self.max_halvings)


@dataclass
class StepRecord:
    index: int
    stepsize: float
    halvings: int = 0
    newton_iterations: int = 0
    increment_norms: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    min_jacobian: list = field(default_factory=list)


@dataclass
class SolverReport:
    strategy: str
    N: int
    epsilon: float
    policy: str
    steps: list = field(default_factory=list)
    newton_steps: StepRecord | None = None
    total_solves: int = 0
    converged: bool = False
    message: str = ""

    @property
    def stepsizes(self) -> list:
        return [s.stepsize for s in self.steps]

    @property
    def stepsize_sum(self) -> float:
        return math.fsum(self.stepsizes)

    @property
    def newton_iterations(self) -> int:
        n = sum(s.newton_iterations for s in self.steps)
        if self.newton_steps is not None:
            n += self.newton_steps.newton_iterations
        return n

    def to_dict(self) -> dict:
        out = asdict(self)
        out["stepsize_sum"] = self.stepsize_sum
        out["newton_iterations"] = self.newton_iterations
        return out


class DeformProblem:
    """Dirichlet problem of hyperelasticity on one or more initial patches.

    Parameters
    ----------
    patches : sequence of Patch
        Initial (reference) patches sharing the physical dimension.
    maps : sequence of int arrays
        ``maps[k][a]`` is the global index of local basis function ``a``
        of patch ``k``.
    fixed : bool array, shape (n_global,)
        Rows prescribed by boundary data.
    target : array, shape (n_global, d)
        Target control points of the fixed rows (ignored elsewhere).
    """

    def __init__(self, patches: Sequence[Patch], maps, fixed, target, material: MaterialParams):
        self.patches = list(patches)
        self.maps = [np.asarray(m, dtype=np.int64) for m in maps]
        self.material = material
        self.d = self.patches[0].phys_dim
        n = int(max(m.max() for m in self.maps)) + 1
        self.n = n
        self.fixed = np.asarray(fixed, dtype=bool)
        if self.fixed.shape != (n,):
            raise DomainError("fixed mask does not match the global dof count")
        c0 = np.zeros((n, self.d))
        for p, m in zip(self.patches, self.maps):
            c0[m] = p.cps
        self.c0 = c0
        self.target = np.where(self.fixed[:, None], np.asarray(target, dtype=float), c0)
        self.u_dirichlet = np.where(self.fixed[:, None], self.target - c0, 0.0)
        self.free_dofs = dofs_of(np.flatnonzero(~self.fixed), self.d)
        self.fixed_dofs = dofs_of(np.flatnonzero(self.fixed), self.d)
        self._mass = None
        self._floors = None
        self._single = len(self.patches) == 1 and np.array_equal(self.maps[0], np.arange(n))

    @classmethod
    def from_target(cls, initial: Patch, target: BoundaryShell | Patch,
                    material: MaterialParams) -> "DeformProblem":
        """Single-patch problem; ``target`` is a shell or a patch supplying it."""
        shell0 = initial.boundary()
        if isinstance(target, Patch):
            target = target.boundary()
        u = dirichlet_from_shells(target, shell0)
        mask = initial.basis.boundary_mask()
        tgt = initial.cps + u
        for (k, f), side in target.items():
            tgt[initial.side_indices(k, f)] = side.cps
        return cls([initial], [np.arange(initial.basis.size)], mask, tgt, material)

    # --- assembly -----------------------------------------------------
    def _gather(self, u, k):
        return u[self.maps[k]]

    def assemble(self, u, tangent: bool = True):
        """Global residual vector and tangent matrix at displacement ``u``."""
        d = self.d
        if self._single:
            return patch_residual(self.patches[0], u, self.material, tangent)
        r = np.zeros(self.n * d)
        parts = []
        for k, p in enumerate(self.patches):
            try:
                rk, Kk = patch_residual(p, self._gather(u, k), self.material, tangent)
            except NonBijectiveStateError as exc:
                raise NonBijectiveStateError(f"patch {k}: {exc}", element=k,
                                             min_jacobian=exc.min_jacobian) from exc
            g = dofs_of(self.maps[k], d)
            r += np.bincount(g, weights=rk, minlength=self.n * d)
            if tangent:
                parts.append((g, Kk.tocoo()))
        if not tangent:
            return r, None
        return r, self._merge(parts)

    def _merge(self, parts):
        rows = np.concatenate([g[c.row] for g, c in parts])
        cols = np.concatenate([g[c.col] for g, c in parts])
        data = np.concatenate([c.data for _, c in parts])
        N = self.n * self.d
        return scipy.sparse.coo_matrix((data, (rows, cols)), shape=(N, N)).tocsr()

    def linear_matrix(self, u):
        """Hooke stiffness on the deformed configuration ``c0 + u``."""
        parts = []
        for k, p in enumerate(self.patches):
            Kk = patch_linear_matrix(p.with_cps(p.cps + self._gather(u, k)), self.material)
            parts.append((dofs_of(self.maps[k], self.d), Kk.tocoo()))
        return self._merge(parts)

    @property
    def mass(self):
        if self._mass is None:
            parts = []
            for p, m in zip(self.patches, self.maps):
                Mk = patch_mass_matrix(p).tocoo()
                parts.append(scipy.sparse.coo_matrix(
                    (Mk.data, (m[Mk.row], m[Mk.col])), shape=(self.n, self.n)))
            self._mass = sum(parts[1:], parts[0]).tocsr()
        return self._mass

    def l2_norm(self, u) -> float:
        u = np.asarray(u).reshape(self.n, self.d)
        return float(np.sqrt(max(np.einsum("ij,ij->", u, self.mass @ u), 0.0)))

    # --- bijectivity --------------------------------------------------
    def _floor(self, k):
        if self._floors is None:
            floors = []
            for p in self.patches:
                tab = element_tables(p.basis)
                dets = kernels.jacobian_dets(np.ascontiguousarray(p.cps[tab.idx]), tab.grads)
                floors.append(1e-12 * float(np.sum(tab.weights * np.abs(dets))))
            self._floors = floors
        return self._floors[k]

    def min_jacobian(self, u) -> float:
        """Smallest ``det grad_xi (G0 + u)`` over all Gauss points."""
        return min(self.patch_min_jacobians(u))

    def patch_min_jacobians(self, u) -> list:
        out = []
        for k, p in enumerate(self.patches):
            tab = element_tables(p.basis)
            X = np.ascontiguousarray((p.cps + self._gather(u, k))[tab.idx])
            out.append(float(kernels.jacobian_dets(X, tab.grads).min()))
        return out

    def admissible(self, u, strategy: str = "gauss") -> bool:
        if strategy in ("gauss", "gauss-sampling"):
            mins = self.patch_min_jacobians(u)
            return all(m > self._floor(k) for k, m in enumerate(mins))
        return all(check_bijective(p, strategy, self._floor(k)).bijective
                   for k, p in enumerate(self.deformed_patches(u)))

    def deformed_patches(self, u, exact_boundary: bool = False) -> list:
        u = np.asarray(u).reshape(self.n, self.d)
        pos = self.c0 + u
        if exact_boundary:
            pos = np.where(self.fixed[:, None], self.target, pos)
        return [p.with_cps(pos[m]) for p, m in zip(self.patches, self.maps)]

    def zero(self) -> np.ndarray:
        return np.zeros((self.n, self.d))


def dirichlet_from_shells(target: BoundaryShell, initial: BoundaryShell) -> np.ndarray:
    """Boundary coefficients ``c_i - c0_i`` as an ``(n, d)`` array.

    Interior rows are zero. Sides must carry identical bases.
    """
    if target.dim != initial.dim:
        raise IncompatibleSpaceError("shells of different dimension")
    for key, side in target.items():
        if side.basis != initial[key].basis:
            raise IncompatibleSpaceError(f"side {key}: target and initial bases differ")
        if side.phys_dim != initial[key].phys_dim:
            raise IncompatibleSpaceError(f"side {key}: physical dimensions differ")
    basis = initial.basis
    ref = Patch(basis, np.zeros((basis.size, initial.phys_dim)))
    out = np.zeros((basis.size, initial.phys_dim))
    for (k, f), side in target.items():
        out[ref.side_indices(k, f)] = side.cps - initial[(k, f)].cps
    return out


def _solve(K, rhs):
    x = scipy.sparse.linalg.spsolve(K.tocsc(), rhs)
    if not np.all(np.isfinite(x)):
        raise DivergenceError("linear solve produced non-finite values")
    return x


def adapt_scale(problem: DeformProblem, u, du, config: DeformConfig | None = None) -> float:
    """Largest ``t = 2**-k`` keeping ``u + t du`` bijective.

    Raises :class:`StallError` when ``k`` would exceed the allowed halvings.
    """
    config = config or DeformConfig()
    limit = config.halvings_allowed
    t = 1.0
    for _ in range(limit + 1):
        if problem.admissible(u + t * du, config.bijectivity_strategy):
            return t
        t *= 0.5
    raise StallError(
        f"no admissible scaling down to t = 2^-{limit}; increase the number of "
        f"loading steps (try N = {2 * config.N}) and restart")


def _rel(problem, du, u) -> float:
    num = problem.l2_norm(du)
    den = problem.l2_norm(u)
    return num if den < 1e-14 else num / den


def newton_iterate(problem: DeformProblem, u, config: DeformConfig):
    """One type-A update with homogeneous boundary increment.

    Returns ``(u_new, relative_increment, t, residual_norm)``.
    """
    r, K = problem.assemble(u)
    F = problem.free_dofs
    du = np.zeros(problem.n * problem.d)
    if F.size:
        du[F] = _solve(K[F][:, F], -r[F])
    du = du.reshape(problem.n, problem.d)
    t = adapt_scale(problem, u, du, config)
    rel = _rel(problem, t * du, u)
    return u + t * du, rel, t, float(np.linalg.norm(r[F]))


def load_step(problem: DeformProblem, u, frac_from: float, frac_to: float,
              config: DeformConfig, operator: str = "tangent"):
    """One type-B update advancing the boundary data between two fractions.

    ``operator="linear"`` replaces the tangent by the Hooke stiffness on the
    deformed configuration (the linear diagonal variant). Returns
    ``(u_new, accepted_fraction, halvings)``.
    """
    F, B = problem.free_dofs, problem.fixed_dofs
    N = problem.n * problem.d
    du = np.zeros(N)
    du[B] = (frac_to - frac_from) * problem.u_dirichlet.ravel()[B]
    if operator == "tangent":
        r, K = problem.assemble(u)
        rhs = -r[F] - K[F][:, B] @ du[B]
    else:
        K = problem.linear_matrix(u)
        rhs = -(K[F][:, B] @ du[B])
    if F.size:
        du[F] = _solve(K[F][:, F], rhs)
    du = du.reshape(problem.n, problem.d)
    t = adapt_scale(problem, u, du, config)
    halvings = int(round(-math.log2(t)))
    frac = frac_to if t == 1.0 else frac_from + t * (frac_to - frac_from)
    u_new = u + t * du
    # keep the prescribed rows free of accumulated round-off
    u_new[problem.fixed] = frac * problem.u_dirichlet[problem.fixed]
    return u_new, frac, halvings


def _next_fraction(frac: float, config: DeformConfig, first: bool) -> float:
    remaining = 1.0 - frac
    if config.stepsize_policy == "greedy":
        return 1.0
    h = 1.0 / config.N
    if remaining <= h * (1.0 + 1e-9):
        return 1.0
    return frac + h


def _newton_loop(problem, u, config, record: StepRecord, report: SolverReport):
    for _ in range(config.max_newton_iters):
        try:
            u, rel, t, rnorm = newton_iterate(problem, u, config)
        except (StallError, DivergenceError) as exc:
            exc.report = report
            report.message = str(exc)
            raise
        report.total_solves += 1
        record.newton_iterations += 1
        record.increment_norms.append(rel)
        record.residual_norms.append(rnorm)
        record.min_jacobian.append(problem.min_jacobian(u))
        if rel < config.epsilon and t == 1.0:
            return u
    raise DivergenceError(
        f"Newton did not reach epsilon={config.epsilon} in {config.max_newton_iters} "
        f"iterations (last relative increment {record.increment_norms[-1]:.3e})", report)


def _loading_phase(problem, u, config, report, operator, newton_each_step):
    frac = 0.0
    i = 0
    while frac < 1.0:
        i += 1
        target = _next_fraction(frac, config, first=(i == 1))
        try:
            u, new_frac, halvings = load_step(problem, u, frac, target, config, operator)
        except StallError as exc:
            exc.report = report
            report.message = str(exc)
            raise
        report.total_solves += 1
        h = (1.0 - frac) if new_frac == 1.0 else new_frac - frac
        rec = StepRecord(i, h, halvings)
        rec.min_jacobian.append(problem.min_jacobian(u))
        report.steps.append(rec)
        frac = new_frac
        if newton_each_step:
            u = _newton_loop(problem, u, config, rec, report)
        if i > 64 * config.N + 1000:
            raise StallError("loading did not complete", report)
    return u


def _trivial(problem, report):
    if np.any(problem.u_dirichlet != 0.0):
        return None
    report.steps.append(StepRecord(1, 1.0, 0, 0, [], [], [problem.min_jacobian(problem.zero())]))
    report.converged = True
    return problem.zero()


def _new_report(config, strategy):
    return SolverReport(strategy, config.N, config.epsilon, config.stepsize_policy)


def solve_incremental_newton(problem: DeformProblem, config: DeformConfig):
    """Type-B predictor followed by type-A corrections at every loading step."""
    report = _new_report(config, "incremental-newton")
    u = _trivial(problem, report)
    if u is None:
        u = _loading_phase(problem, problem.zero(), config, report, "tangent", True)
        report.converged = True
    return u, report


def solve_ndil(problem: DeformProblem, config: DeformConfig):
    """N diagonal type-B updates, then Newton unless ``stand_alone``."""
    report = _new_report(config, "ndil")
    u = _trivial(problem, report)
    if u is None:
        u = _loading_phase(problem, problem.zero(), config, report, "tangent", False)
        if config.stand_alone:
            report.converged = False
            report.message = "stand-alone diagonal loading result (no Newton phase)"
        else:
            report.newton_steps = StepRecord(0, 0.0)
            u = _newton_loop(problem, u, config, report.newton_steps, report)
            report.converged = True
    return u, report


def solve_ldil(problem: DeformProblem, config: DeformConfig):
    """Linear elastic increments on successively deformed configurations."""
    report = _new_report(config, "ldil")
    u = _trivial(problem, report)
    if u is None:
        u = _loading_phase(problem, problem.zero(), config, report, "linear", False)
        if config.stand_alone:
            report.converged = False
            report.message = "stand-alone linear diagonal loading result"
        else:
            report.newton_steps = StepRecord(0, 0.0)
            u = _newton_loop(problem, u, config, report.newton_steps, report)
            report.converged = True
    return u, report


_SOLVERS = {
    "incremental-newton": solve_incremental_newton,
    "ndil": solve_ndil,
    "ldil": solve_ldil,
}


def solve(problem: DeformProblem, config: DeformConfig):
    """Dispatch on ``config.strategy``; returns ``(u, report)``."""
    u, report = _SOLVERS[config.strategy](problem, config)
    log.info("%s: %d steps, %d solves, stepsizes sum %.17g", config.strategy,
             len(report.steps), report.total_solves, report.stepsize_sum)
    return u, report


@dataclass(eq=False)
class DeformResult:
    displacement: DiscreteField
    final_patch: Patch
    report: SolverReport
    initial: Patch


def compose_final(initial: Patch, displacement: DiscreteField) -> Patch:
    """Parametrization of the deformed domain: control points ``c0 + d``."""
    if displacement.basis != initial.basis:
        raise IncompatibleSpaceError("displacement and initial patch use different bases")
    return initial.with_cps(initial.cps + displacement.coeffs)


def deform_patch(initial: Patch, target: BoundaryShell | Patch,
                 config: DeformConfig | None = None) -> DeformResult:
    """Deform ``initial`` so that its boundary matches ``target``."""
    config = config or DeformConfig()
    problem = DeformProblem.from_target(initial, target, config.material_for(initial.phys_dim))
    u, report = solve(problem, config)
    field_ = DiscreteField(initial.basis, u)
    final = problem.deformed_patches(u, exact_boundary=True)[0]
    return DeformResult(field_, final, report, initial)
