"""Time the element kernels of both backends on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

For each case the script checks that both backends agree before timing
them, then prints best-of-``repeat`` wall times and the speedup. The
compiled kernels are warmed up first so compilation is not timed.
"""
import argparse
import time

import numpy as np

from isodeform import kernels
from isodeform.bspline import TensorBasis, uniform_knots
from isodeform.elasticity import MaterialParams, _local, element_tables
from isodeform.geometry import identity_patch


def case(dim, degree, elements, seed=0):
    kv = uniform_knots(degree, elements + degree)
    patch = identity_patch(TensorBasis((kv,) * dim))
    rng = np.random.default_rng(seed)
    h = 1.0 / elements
    patch = patch.with_cps(patch.cps + 0.05 * h * rng.normal(size=patch.cps.shape))
    U = 0.05 * h * rng.normal(size=patch.cps.shape)
    tab = element_tables(patch.basis)
    return tab, _local(tab, patch.cps), _local(tab, U)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small cases only")
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")
    mat = MaterialParams(1.0, 0.49)
    cases = [(2, 2, 16), (2, 3, 32), (3, 2, 6)] if args.quick else \
        [(2, 2, 16), (2, 2, 64), (2, 3, 64), (3, 2, 8), (3, 2, 14)]
    print(f"{'case':<18}{'kernel':<14}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for dim, p, n in cases:
        tab, X, U = case(dim, p, n)
        jobs = {
            "neohooke+K": lambda impl: impl.neohooke(X, U, tab.grads, tab.weights, mat.lam, mat.mu, True),
            "neohooke": lambda impl: impl.neohooke(X, U, tab.grads, tab.weights, mat.lam, mat.mu, False),
            "linear": lambda impl: impl.linear(X, tab.grads, tab.weights, mat.lam, mat.mu),
            "mass": lambda impl: impl.mass(X, tab.vals, tab.grads, tab.weights),
            "jacobian_dets": lambda impl: impl.jacobian_dets(X, tab.grads),
        }
        label = f"{dim}D p={p} {n}^{dim}"
        for name, job in jobs.items():
            a, b = job(kernels.numpy_impl), job(kernels.numba_impl)  # also warms up numba
            for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
                if x.size == 0 or y.size == 0:
                    continue  # a skipped tangent may be returned empty
                if not np.allclose(x, y, rtol=1e-10, atol=1e-12):
                    raise SystemExit(f"backends disagree on {name} for {label}")
            t_np = best_of(lambda: job(kernels.numpy_impl), args.repeat)
            t_nb = best_of(lambda: job(kernels.numba_impl), args.repeat)
            print(f"{label:<18}{name:<14}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
