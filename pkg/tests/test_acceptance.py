"""Acceptance criteria 1-10.

Each test prints one ``criterion k: PASS|FAIL`` line (visible with ``-s``)
and the same lines are collected in the terminal summary.
"""
import time
from importlib.resources import files

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isodeform.bspline import KnotVector, collocation, evaluate, gauss_rule, refine_to, uniform_knots
from isodeform.deform import DeformConfig, DeformProblem, solve
from isodeform.elasticity import (DiscreteField, MaterialParams, assemble_linear,
                                  assemble_residual, assemble_tangent, patch_residual)
from isodeform.errors import IsodeformError, NonBijectiveStateError
from isodeform.fixtures import unit_cube
from isodeform.geometry import check_bijective, coons_patch, jacobian, quality
from isodeform.io import load_geometry
from isodeform.multipatch import PatchTopology, deform_multipatch
from isodeform.pipeline import RunConfig, run_pipeline
from isodeform.simplify import CoarseSpec, build_initial_domain

from conftest import ACCEPTANCE, square_patch

DATA = files("isodeform") / "data"
PUZZLE_RATIO_REGRESSION = 4.47  # m(0.49) / m(0) recorded at the first verified run

# pinned pipeline settings per committed fixture
FIXTURE_RUNS = {
    "unit_square": {},
    "mild_quad": {"coarse_degree": 1},
    "concave_dent": {"coarse_degree": 1},
    "puzzle_analog": {"coarse_degree": 2, "N": 16},
    "dented_cube": {"coarse_degree": 1},
    "ring_analog": {"N": 5, "nu": 0.48},
}


def verdict(k, ok, detail):
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def pipeline_runs():
    runs = {}
    for name, kw in FIXTURE_RUNS.items():
        for strategy in ("newton", "ndil"):
            t = time.perf_counter()
            res = run_pipeline(DATA / f"{name}.json", RunConfig(strategy=strategy, **kw))
            runs[(name, strategy)] = (res, time.perf_counter() - t)
    return runs


def test_01_affine_exactness():
    g0 = square_patch(2, 12)  # 10 x 10 quadratic elements
    A = np.array([[0.35, -0.2], [0.25, 0.3]])
    b = np.array([0.1, -0.4])
    assert np.linalg.det(np.eye(2) + A) > 0
    target = g0.with_cps(g0.cps @ (np.eye(2) + A).T + b)
    exact = target.cps - g0.cps
    mat = MaterialParams(1.0, 0.49)
    prob = DeformProblem.from_target(g0, target, mat)
    parts, ok = [], True
    for strategy in ("incremental-newton", "ndil", "ldil"):
        t = time.perf_counter()
        u, _ = solve(prob, DeformConfig(strategy=strategy, material=mat))
        dt = time.perf_counter() - t
        err = prob.l2_norm(u - exact) / prob.l2_norm(exact)
        ok &= err <= 1e-9 and dt < 5.0
        parts.append(f"{strategy} err={err:.1e} t={dt:.2f}s")
    verdict(1, ok, "; ".join(parts))


def _random_state(rng, g0, mat):
    amp = 0.05
    while True:
        U = amp * rng.normal(size=g0.cps.shape)
        try:
            patch_residual(g0, U, mat, tangent=False)
            return U
        except NonBijectiveStateError:
            amp /= 2


def test_02_tangent_consistency():
    rng = np.random.default_rng(7)
    mat = MaterialParams(1.0, 0.45)
    worst_fd, worst_hooke = 0.0, 0.0
    for g0 in (square_patch(2, 5), unit_cube(2, 3)):
        g0 = g0.with_cps(g0.cps + 0.02 * rng.normal(size=g0.cps.shape))
        for _ in range(20):
            U = _random_state(rng, g0, mat)
            sysm = assemble_tangent(DiscreteField(g0.basis, U), g0, mat)
            w = np.zeros(U.size)
            w[sysm.dof_map] = rng.normal(size=sysm.dof_map.size)
            h = 1e-6
            rp = assemble_residual(DiscreteField(g0.basis, U.ravel() + h * w), g0, mat)
            rm = assemble_residual(DiscreteField(g0.basis, U.ravel() - h * w), g0, mat)
            pred = sysm.matrix @ w[sysm.dof_map]
            worst_fd = max(worst_fd, np.linalg.norm((rp - rm) / (2 * h) - pred) / np.linalg.norm(pred))
        T = assemble_tangent(DiscreteField.zeros(g0.basis, g0.dim), g0, mat).matrix
        L = assemble_linear(g0, mat).matrix
        worst_hooke = max(worst_hooke, abs(T - L).max())
    verdict(2, worst_fd <= 1e-6 and worst_hooke <= 1e-12,
            f"max FD rel err {worst_fd:.1e} (<=1e-6), zero-state vs Hooke {worst_hooke:.1e} (<=1e-12)")


def test_03_convergence_orders():
    t0 = time.perf_counter()
    shell = load_geometry(DATA / "concave_dent.json")
    g0, _ = build_initial_domain(shell, CoarseSpec(1))
    mat = MaterialParams(1.0, 0.49)
    prob = DeformProblem.from_target(g0, shell, mat)
    u_star, _ = solve(prob, DeformConfig(N=4, epsilon=1e-13, material=mat))
    Ns = [2, 4, 8, 16, 32]

    def phase_one(strategy, N):
        cfg = DeformConfig(N=N, strategy=strategy, stand_alone=True, stepsize_policy="fixed",
                           material=mat)
        return solve(prob, cfg)[0]

    e_n = [prob.l2_norm(phase_one("ndil", N) - u_star) for N in Ns]
    lin = {N: phase_one("ldil", N) for N in Ns + [64, 128]}
    u_lin = 2 * lin[128] - lin[64]  # Richardson limit of a first-order sequence
    e_l = [prob.l2_norm(lin[N] - u_lin) for N in Ns]
    s_n = -np.polyfit(np.log2(Ns), np.log2(e_n), 1)[0]
    s_l = -np.polyfit(np.log2(Ns), np.log2(e_l), 1)[0]
    dt = time.perf_counter() - t0
    verdict(3, abs(s_n - 2) <= 0.3 and abs(s_l - 1) <= 0.2 and dt < 120,
            f"N-DIL slope {s_n:.2f} (2+-0.3), L-DIL slope {s_l:.2f} (1+-0.2), {dt:.1f}s")


def test_04_newton_behaviour(pipeline_runs):
    worst, solves_ok, lines = 0, True, []
    for (name, strategy), (res, _) in pipeline_runs.items():
        assert res.exit_code == 0, (name, strategy, res.report.get("message"))
        iters = [t["newton_iterations"] for t in res.report["trace"]]
        worst = max([worst] + iters)
        if strategy == "ndil":
            N = res.report["config"]["N"]
            solves_ok &= res.report["total_solves"] <= N + 7
            lines.append(f"{name}:{res.report['total_solves']}/{N + 7}")
    verdict(4, worst <= 7 and solves_ok,
            f"max Newton iterations per step {worst} (<=7); N-DIL solves/limit " + " ".join(lines))


def _puzzle(nu):
    t = time.perf_counter()
    res = run_pipeline(DATA / "puzzle_analog.json",
                       RunConfig(strategy="ndil", coarse_degree=2, N=16, nu=nu))
    return res, time.perf_counter() - t


@pytest.fixture(scope="module")
def puzzle_runs():
    return {nu: _puzzle(nu) for nu in (0.49, 0.0)}


def test_05_puzzle_bijectivity(puzzle_runs):
    coons_m = quality(coons_patch(load_geometry(DATA / "puzzle_analog.json"))).m
    res, dt = puzzle_runs[0.49]
    m = res.report.get("m", float("nan"))
    verdict(5, coons_m < 0 and res.exit_code == 0 and m > 0 and dt < 30,
            f"raw Coons m={coons_m:.3f} (<0), pipeline m={m:.4f} (>0), {dt:.1f}s")


def test_06_poisson_ratio_effect(puzzle_runs):
    m1 = puzzle_runs[0.49][0].report["m"]
    m0 = puzzle_runs[0.0][0].report["m"]
    ratio = m1 / m0
    verdict(6, puzzle_runs[0.0][0].exit_code == 0 and m0 > 0 and ratio >= 3
            and abs(ratio - PUZZLE_RATIO_REGRESSION) <= 0.05,
            f"m(0.49)={m1:.4f}, m(0)={m0:.4f}, ratio {ratio:.2f} (>=3, recorded {PUZZLE_RATIO_REGRESSION})")


def _pairs(res):
    if isinstance(res.final, PatchTopology):
        return list(zip(res.initial.patches, res.final.patches))
    return [(res.initial, res.final)]


def test_07_superposition(pipeline_runs, puzzle_runs):
    rng = np.random.default_rng(11)
    results = [r for r, _ in pipeline_runs.values()] + [r for r, _ in puzzle_runs.values()]
    worst, count = 0.0, 0
    for res in results:
        for g0, g in _pairs(res):
            disp = g0.with_cps(g.cps - g0.cps)
            d = g0.dim
            for xi in rng.random((50, d)):
                j0 = jacobian(g0, xi).gradient
                phi = np.eye(d) + jacobian(disp, xi).gradient @ np.linalg.inv(j0)
                jg = jacobian(g, xi).det
                worst = max(worst, abs(jg - np.linalg.det(phi) * np.linalg.det(j0)) / jg)
                count += 1
    verdict(7, worst <= 1e-10, f"{count} points on {len(results)} results, max rel dev {worst:.1e}")


_guard = {"runs": 0, "accepted": 0, "violations": 0, "bad_sums": 0}


class _Recording(DeformProblem):
    def min_jacobian(self, u):
        _guard["accepted"] += 1
        if not all(check_bijective(p).bijective for p in self.deformed_patches(u)):
            _guard["violations"] += 1
        return super().min_jacobian(u)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.floats(0.05, 0.8), st.floats(0.0, 0.49), st.integers(1, 8),
       st.sampled_from(["incremental-newton", "ndil", "ldil"]),
       st.sampled_from(["adaptive-fixed", "greedy"]), st.booleans())
def _guard_property(amplitude, nu, N, strategy, policy, stand_alone):
    from isodeform.fixtures import concave_dent
    from isodeform.geometry import identity_patch
    shell = concave_dent(amplitude)
    g0 = identity_patch(shell.basis)
    mat = MaterialParams(1.0, nu)
    base = DeformProblem.from_target(g0, shell, mat)
    prob = _Recording(base.patches, base.maps, base.fixed, base.target, mat)
    cfg = DeformConfig(N=N, strategy=strategy, stepsize_policy=policy, stand_alone=stand_alone,
                       material=mat)
    try:
        _, rep = solve(prob, cfg)
    except IsodeformError:
        return  # stalls and divergence are allowed; accepted states were still checked
    _guard["runs"] += 1
    if abs(rep.stepsize_sum - 1.0) > 1e-14:
        _guard["bad_sums"] += 1
    assert _guard["violations"] == 0 and _guard["bad_sums"] == 0


def test_08_guard_invariant():
    _guard_property()
    ok = _guard["violations"] == 0 and _guard["bad_sums"] == 0 and _guard["runs"] > 0
    verdict(8, ok, f"{_guard['runs']} successful randomized runs, {_guard['accepted']} accepted "
                   f"states, {_guard['violations']} guard violations, {_guard['bad_sums']} bad sums")


def test_09_multipatch_ring():
    doc_topo = load_geometry(DATA / "ring_analog.json")
    from isodeform.io import read_document
    targets = read_document(DATA / "ring_analog.json").targets
    t = time.perf_counter()
    res = deform_multipatch(doc_topo, targets,
                            DeformConfig(N=5, strategy="ndil", material=MaterialParams(1.0, 0.48)))
    dt = time.perf_counter() - t
    bij = all(check_bijective(p).bijective for p in res.topology.patches)
    shared = all(np.array_equal(res.topology.patches[i.a].cps[a], res.topology.patches[i.b].cps[b])
                 for i in res.topology.interfaces
                 for a, b in [res.topology.matched_pairs(i, tol=0.0)])
    m = min(quality(p).m for p in res.topology.patches)
    verdict(9, bij and shared and dt < 60,
            f"8 patches bijective={bij} (min m {m:.3f}), interfaces shared exactly={shared}, {dt:.1f}s")


def test_10_spline_core():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    pou, refine_err, quad_err = 0.0, 0.0, 0.0
    for _ in range(60):
        p = int(rng.integers(1, 5))
        inner = np.sort(np.round(rng.random(int(rng.integers(0, 7))), 3))
        inner = inner[(inner > 0) & (inner < 1)]
        inner = np.unique(inner)
        kv = KnotVector(p, np.r_[np.zeros(p + 1), inner, np.ones(p + 1)])
        xs = rng.random(200)
        pou = max(pou, np.abs(collocation(kv, xs).sum(axis=1) - 1).max())
        c = rng.normal(size=(kv.n, 2))
        fine = kv.elevated(int(rng.integers(0, 3))).uniformly_refined(int(rng.integers(1, 4)))
        cf = refine_to(kv, c, fine)
        refine_err = max(refine_err, np.abs(evaluate(kv, c, xs) - evaluate(fine, cf, xs)).max())
    for n in range(1, 11):
        rule = gauss_rule(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            quad_err = max(quad_err, abs(np.sum(rule.weights * rule.nodes ** k) - exact))
    dt = time.perf_counter() - t
    verdict(10, pou <= 1e-13 and refine_err <= 1e-12 and quad_err <= 1e-13 and dt < 10,
            f"partition of unity {pou:.1e}, refinement {refine_err:.1e}, quadrature {quad_err:.1e}, "
            f"{dt:.2f}s")
