"""End-to-end driver: simplify, Coons, deform, compose, measure, export."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path


from .deform import DEFAULT_NU, DeformConfig, deform_patch
from .elasticity import MaterialParams
from .errors import (DivergenceError, DomainError, GeometryFileError, InitialDomainError,
                     IsodeformError, StallError)
from .geometry import quality
from .io import GeometryDocument, atomic_write, export_mesh, read_document, save_geometry
from .multipatch import deform_multipatch
from .simplify import CoarseSpec, build_initial_domain

log = logging.getLogger(__name__)

__all__ = ["RunConfig", "PipelineResult", "run_pipeline", "exit_code_for", "EXIT_CODES"]

EXIT_CODES = {
    "ok": 0,
    "error": 1,
    "parse": 3,
    "initial-domain": 4,
    "stall": 5,
    "divergence": 6,
}


@dataclass
class RunConfig:
    strategy: str = "ndil"
    N: int = 10
    epsilon: float = 1e-9
    nu: float | None = None
    E: float = 1.0
    coarse_degree: int = 2
    coarse_size: int | None = None
    policy: str = "adaptive"
    bijectivity: str = "gauss"
    max_newton_iters: int = 25
    max_halvings: int = 10
    stand_alone: bool = False
    density: int = 4
    out_dir: str | None = None
    report_path: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.density < 1:
            raise DomainError("sampling density must be at least 1")
        if self.coarse_degree < 1:
            raise DomainError("coarse degree must be at least 1")
        if self.bijectivity not in ("gauss", "coefficient"):
            raise DomainError(f"unknown bijectivity test {self.bijectivity!r}")
        self.deform_config()  # validates the solver settings

    def material(self, d: int = 2) -> MaterialParams:
        """Material for a ``d``-dimensional run; ``nu=None`` picks the default for ``d``."""
        return MaterialParams(self.E, DEFAULT_NU[d] if self.nu is None else self.nu)

    def deform_config(self, d: int = 2) -> DeformConfig:
        return DeformConfig(N=self.N, epsilon=self.epsilon, max_newton_iters=self.max_newton_iters,
                            strategy=self.strategy, stepsize_policy=self.policy,
                            max_halvings=self.max_halvings, bijectivity_strategy=self.bijectivity,
                            material=self.material(d), stand_alone=self.stand_alone)

    def coarse_spec(self) -> CoarseSpec:
        return CoarseSpec(self.coarse_degree, self.coarse_size)


@dataclass
class PipelineResult:
    exit_code: int
    report: dict
    artifacts: list = field(default_factory=list)
    final: object = None
    initial: object = None


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, GeometryFileError):
        return EXIT_CODES["parse"]
    if isinstance(exc, InitialDomainError):
        return EXIT_CODES["initial-domain"]
    if isinstance(exc, StallError):
        return EXIT_CODES["stall"]
    if isinstance(exc, DivergenceError):
        return EXIT_CODES["divergence"]
    return EXIT_CODES["error"]


def _finite(x):
    return x if math.isfinite(x) else None


def _quality_block(patches, samples_per_span=None) -> dict:
    qs = [quality(p, samples_per_span) for p in patches]
    m = min(q.m for q in qs)
    R = max(q.m * q.R for q in qs) / m if m > 0 else math.inf
    return {"m": m, "R": _finite(R), "per_patch": [{"m": q.m, "R": _finite(q.R)} for q in qs]}


def _tolerances(cfg: RunConfig) -> dict:
    return {
        "epsilon": cfg.epsilon,
        "max_newton_iters": cfg.max_newton_iters,
        "max_halvings": cfg.max_halvings,
        "bijectivity_test": cfg.bijectivity,
        "bijectivity_floor_relative_to_volume": 1e-12,
        "quality_samples_per_span": "degree + 2",
        "interface_match_tolerance": 1e-10,
        "shell_compatibility_tolerance": 1e-12,
    }


def _trace(report) -> list:
    out = []
    for s in report.steps:
        out.append({"step": s.index, "stepsize": s.stepsize, "halvings": s.halvings,
                    "newton_iterations": s.newton_iterations,
                    "increment_norms": s.increment_norms, "residual_norms": s.residual_norms,
                    "min_jacobian": s.min_jacobian})
    if report.newton_steps is not None:
        s = report.newton_steps
        out.append({"step": "final-newton", "newton_iterations": s.newton_iterations,
                    "increment_norms": s.increment_norms, "residual_norms": s.residual_norms,
                    "min_jacobian": s.min_jacobian})
    return out


def _run(doc: GeometryDocument, cfg: RunConfig, report: dict, artifacts: list):
    dcfg = cfg.deform_config(doc.phys_dim)
    report["material"] = {"E": dcfg.material.E, "nu": dcfg.material.nu,
                          "lambda": dcfg.material.lam, "mu": dcfg.material.mu}
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if doc.shell is not None:
        if doc.initial is not None:
            initial = doc.initial
            report["initial_source"] = "file"
        else:
            spec = cfg.coarse_spec()
            initial, _ = build_initial_domain(doc.shell, spec, bijectivity=cfg.bijectivity)
            report["initial_source"] = f"simplified (degree {spec.degree}, {spec.num_basis} functions)"
        report["initial"] = _quality_block([initial])
        result = deform_patch(initial, doc.shell, dcfg)
        finals = [result.final_patch]
        sreport = result.report
        final_obj = result.final_patch
        initial_obj = initial
        if out is not None:
            artifacts.append(str(save_geometry(result.final_patch, out / "deformed.json",
                                               label="deformed parametrization")))
            artifacts.append(str(save_geometry(initial, out / "initial.json", label="initial domain")))
    else:
        topo = doc.topology
        report["initial_source"] = "file"
        report["initial"] = _quality_block(topo.patches)
        targets = doc.targets
        if not targets:
            raise DomainError("a patch assembly needs target sides for its outer boundary")
        res = deform_multipatch(topo, targets, dcfg)
        finals = res.topology.patches
        sreport = res.report
        final_obj = res.topology
        initial_obj = topo
        if out is not None:
            artifacts.append(str(save_geometry(res.topology, out / "deformed.json",
                                               label="deformed assembly")))
    report.update(_quality_block(finals))
    report["newton_iterations"] = sreport.newton_iterations
    report["total_solves"] = sreport.total_solves
    report["stepsizes"] = sreport.stepsizes
    report["stepsize_sum"] = sreport.stepsize_sum
    report["converged"] = sreport.converged
    report["solver_message"] = sreport.message
    report["trace"] = _trace(sreport)
    if out is not None:
        artifacts += [str(p) for p in export_mesh(final_obj, out / "mesh.vtk", cfg.density)]
        if finals[0].dim == 2 and finals[0].phys_dim == 2:
            artifacts += [str(p) for p in export_mesh(final_obj, out / "isolines.svg", cfg.density,
                                                       "isolines-svg")]
    return final_obj, initial_obj


def run_pipeline(geometry, config: RunConfig | None = None) -> PipelineResult:
    """Run the full pipeline on a geometry file path or document.

    Errors do not propagate: they are turned into an exit code and a
    report with ``status`` set to the error class.
    """
    cfg = config or RunConfig()
    report = {"status": "ok", "config": asdict(cfg), "tolerances": _tolerances(cfg)}
    artifacts: list = []
    final = initial = None
    try:
        doc = geometry if isinstance(geometry, GeometryDocument) else read_document(geometry)
        report["geometry"] = {"dim": doc.dim, "phys_dim": doc.phys_dim, "label": doc.label}
        final, initial = _run(doc, cfg, report, artifacts)
        code = 0
    except IsodeformError as exc:
        code = exit_code_for(exc)
        report["status"] = type(exc).__name__
        report["message"] = str(exc)
        q = getattr(exc, "quality", None)
        if q is not None:
            report["initial"] = {"m": q.m, "R": _finite(q.R)}
        rep = getattr(exc, "report", None)
        if rep is not None:
            report["trace"] = _trace(rep)
            report["stepsizes"] = rep.stepsizes
    report["exit_code"] = code
    if cfg.report_path:
        artifacts.append(str(atomic_write(cfg.report_path, json.dumps(report, indent=2) + "\n")))
    return PipelineResult(code, report, artifacts, final, initial)
