"""Command-line interface: ``isodeform <command> GEOMETRY [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import InitialDomainError, IsodeformError
from .geometry import check_bijective, coons_patch, quality
from .io import GeometryDocument, atomic_write, read_document, save_geometry
from .pipeline import EXIT_CODES, RunConfig, exit_code_for, run_pipeline
from .simplify import build_initial_domain

log = logging.getLogger("isodeform")


def _common(p: argparse.ArgumentParser):
    p.add_argument("geometry", help="geometry file (JSON)")
    p.add_argument("--out", metavar="DIR", help="directory for output files")
    p.add_argument("--report", metavar="PATH", help="write a JSON report here")
    p.add_argument("-v", "--verbose", action="store_true")


def _coarse(p: argparse.ArgumentParser):
    p.add_argument("--coarse-degree", type=int, default=2, metavar="Q")
    p.add_argument("--coarse-size", type=int, default=None, metavar="M",
                   help="coarse basis size per side (default: degree + 1)")


def _solver(p: argparse.ArgumentParser):
    p.add_argument("--strategy", choices=["newton", "ndil", "ldil"], default="ndil")
    p.add_argument("--steps", type=int, default=10, metavar="N", help="loading steps")
    p.add_argument("--nu", type=float, default=None,
                   help="Poisson's ratio (default 0.49 in 2D, 0.46 in 3D)")
    p.add_argument("--E", type=float, default=1.0, dest="E", help="Young's modulus")
    p.add_argument("--epsilon", type=float, default=1e-9, help="Newton tolerance")
    p.add_argument("--policy", choices=["fixed", "adaptive", "greedy"], default="adaptive")
    p.add_argument("--bijectivity", choices=["gauss", "coefficient"], default="gauss")
    p.add_argument("--stand-alone", action="store_true",
                   help="stop after the diagonal loading phase")
    p.add_argument("--density", type=int, default=4, help="export samples per knot span")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isodeform",
                                     description="Bijective spline parametrizations by elastic deformation.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simplify", help="simplify a boundary and build the initial domain")
    _common(p)
    _coarse(p)
    p = sub.add_parser("coons", help="fill a boundary with a Coons patch")
    _common(p)
    p = sub.add_parser("deform", help="deform a given initial domain onto the target boundary")
    _common(p)
    _solver(p)
    p = sub.add_parser("pipeline", help="simplify, fill and deform in one run")
    _common(p)
    _coarse(p)
    _solver(p)
    p = sub.add_parser("quality", help="report m(G) and R(G) of the patches in a file")
    _common(p)
    return parser


def _emit(report: dict, args) -> None:
    text = json.dumps(report, indent=2) + "\n"
    if args.report:
        atomic_write(args.report, text)
    sys.stdout.write(text)


def _patches(doc: GeometryDocument):
    if doc.topology is not None:
        return doc.topology.patches
    if doc.initial is not None:
        return [doc.initial]
    raise IsodeformError("file holds no patches")


def _quality_report(patches) -> dict:
    out = []
    for k, p in enumerate(patches):
        q = quality(p)
        out.append({"patch": k, "m": q.m, "R": q.R if q.valid else None,
                    "bijective": check_bijective(p).bijective})
    return {"status": "ok", "m": min(r["m"] for r in out), "patches": out}


def _cmd_simplify(args) -> int:
    doc = read_document(args.geometry)
    cfg = RunConfig(coarse_degree=args.coarse_degree, coarse_size=args.coarse_size)
    try:
        initial, shell0 = build_initial_domain(doc.shell, cfg.coarse_spec())
    except InitialDomainError as exc:
        _emit({"status": "InitialDomainError", "message": str(exc), "m": exc.quality.m}, args)
        return EXIT_CODES["initial-domain"]
    report = {"status": "ok", **_quality_report([initial])}
    if args.out:
        out_doc = GeometryDocument(doc.dim, doc.phys_dim, shell=doc.shell, initial=initial,
                                   label="target with simplified initial domain")
        report["artifacts"] = [str(save_geometry(out_doc, Path(args.out) / "initial.json")),
                               str(save_geometry(shell0, Path(args.out) / "simplified.json",
                                                 label="simplified boundary"))]
    _emit(report, args)
    return 0


def _cmd_coons(args) -> int:
    doc = read_document(args.geometry)
    patch = coons_patch(doc.shell)
    report = _quality_report([patch])
    if args.out:
        report["artifacts"] = [str(save_geometry(patch, Path(args.out) / "coons.json",
                                                 label="Coons patch"))]
    _emit(report, args)
    return 0


def _run_config(args, **extra) -> RunConfig:
    return RunConfig(strategy=args.strategy, N=args.steps, epsilon=args.epsilon, nu=args.nu,
                     E=args.E, policy=args.policy, bijectivity=args.bijectivity,
                     stand_alone=args.stand_alone, density=args.density,
                     out_dir=args.out, report_path=args.report, **extra)


def _cmd_pipeline(args) -> int:
    cfg = _run_config(args, coarse_degree=args.coarse_degree, coarse_size=args.coarse_size)
    res = run_pipeline(args.geometry, cfg)
    sys.stdout.write(json.dumps({k: res.report.get(k) for k in
                                 ("status", "m", "R", "newton_iterations", "stepsizes",
                                  "message") if k in res.report}, indent=2) + "\n")
    return res.exit_code


def _cmd_deform(args) -> int:
    doc = read_document(args.geometry)
    if doc.shell is not None and doc.initial is None:
        raise IsodeformError("deform needs an initial domain in the file; "
                             "run 'simplify' first or use 'pipeline'")
    res = run_pipeline(doc, _run_config(args))
    sys.stdout.write(json.dumps({k: res.report.get(k) for k in
                                 ("status", "m", "R", "newton_iterations", "stepsizes",
                                  "message") if k in res.report}, indent=2) + "\n")
    return res.exit_code


def _cmd_quality(args) -> int:
    doc = read_document(args.geometry)
    _emit(_quality_report(_patches(doc)), args)
    return 0


_COMMANDS = {"simplify": _cmd_simplify, "coons": _cmd_coons, "deform": _cmd_deform,
             "pipeline": _cmd_pipeline, "quality": _cmd_quality}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except IsodeformError as exc:
        sys.stderr.write(f"isodeform: error: {exc}\n")
        return exit_code_for(exc)
    except OSError as exc:
        sys.stderr.write(f"isodeform: error: {exc}\n")
        return EXIT_CODES["error"]


if __name__ == "__main__":
    sys.exit(main())
