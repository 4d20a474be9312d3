"""Bijective spline parametrizations by nonlinear elastic deformation.

Typical use::

    from isodeform import CoarseSpec, DeformConfig, build_initial_domain, deform_patch
    initial, _ = build_initial_domain(target_shell, CoarseSpec(2))
    result = deform_patch(initial, target_shell, DeformConfig(N=10))
"""
from .bspline import KnotVector, TensorBasis, evaluate, refine_to, uniform_knots
from .deform import (DeformConfig, DeformProblem, DeformResult, SolverReport, compose_final,
                     deform_patch, solve)
from .elasticity import MaterialParams
from .errors import (CompatibilityError, DivergenceError, DomainError, GeometryFileError,
                     IncompatibleSpaceError, InitialDomainError, IsodeformError,
                     NonBijectiveStateError, StallError, TopologyError)
from .geometry import (BoundaryShell, Patch, check_bijective, coons_patch, identity_patch,
                       jacobian, quality)
from .multipatch import Interface, PatchTopology, build_dof_map, deform_multipatch
from .simplify import CoarseSpec, build_initial_domain, reexpress, simplify_side

__version__ = "0.1.0"
