"""Benchmark the accelerated kernels against the pure-numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--divisions N] [--repeats R]

Builds a 3D structured slab, then times the two per-Newton-iteration
kernels (stiffness blocks, front residual/Jacobian) on both code paths
and reports the speedup.  The first accelerated call is excluded from the
timing (compilation).
"""

import argparse
import time

import numpy as np

from cardiowave import kernels
from cardiowave.mesh import build_structured_slab


def best_of(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--divisions", type=int, default=20,
                        help="slab divisions per axis (default 20)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats, best-of (default 5)")
    args = parser.parse_args()

    n = args.divisions
    mesh = build_structured_slab(3, [0.02, 0.02, 0.02], [n, n, n])
    rng = np.random.default_rng(0)
    sigma = np.tile(np.diag([1.0e-4, 0.44e-4, 0.11e-4]), (mesh.n_cells, 1, 1))
    u = rng.uniform(0.0, 0.05, mesh.n_vertices)
    weights = mesh.measures / 4.0
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_cells} cells")
    print(f"accelerated path available: {kernels.USE_NUMBA}")

    stiff_args = (mesh.basis_gradients, sigma, mesh.measures)
    front_args = (u, mesh.cells, mesh.basis_gradients, sigma, weights, 1e-20)

    if kernels.USE_NUMBA:
        # warm up (compilation happens on the first call)
        kernels.stiffness_cell_values(*stiff_args)
        kernels.eikonal_terms(*front_args)

    rows = [
        ("stiffness blocks", kernels.stiffness_cell_values,
         kernels.stiffness_cell_values_numpy, stiff_args),
        ("front terms", kernels.eikonal_terms,
         kernels.eikonal_terms_numpy, front_args),
    ]
    for name, fast, plain, fargs in rows:
        t_plain = best_of(plain, fargs, args.repeats)
        if kernels.USE_NUMBA:
            t_fast = best_of(fast, fargs, args.repeats)
            print(f"{name:18s} numpy {t_plain * 1e3:8.2f} ms   "
                  f"accelerated {t_fast * 1e3:8.2f} ms   "
                  f"speedup {t_plain / t_fast:5.1f}x")
        else:
            print(f"{name:18s} numpy {t_plain * 1e3:8.2f} ms   "
                  f"(accelerated path disabled)")

    # sanity: both paths agree
    ra, ja, qa = kernels.eikonal_terms(*front_args)
    rb, jb, qb = kernels.eikonal_terms_numpy(*front_args)
    err = max(
        float(np.max(np.abs(ra - rb))),
        float(np.max(np.abs(ja - jb))),
        float(np.max(np.abs(qa - qb))),
    )
    print(f"max path discrepancy: {err:.3e}")


if __name__ == "__main__":
    main()
