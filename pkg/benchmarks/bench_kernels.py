"""Compare the numba kernels with their pure-numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Both twins are always importable, so one process times both paths.
Set GWOT_DISABLE_NUMBA=1 to make the library itself dispatch to numpy.
"""
import argparse
import timeit

import numpy as np

from gwot import kernels
from gwot._accel import HAVE_NUMBA
from gwot.core import build_dense_tensor, gw_objective_dense, gw_objective_separable
from gwot.linear_ot import all_permutations


def best_of(fn, repeat):
    fn()  # compile / warm caches
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def cases(rng):
    n = 12
    L = rng.normal(size=(n, n, n, n))
    P = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
    yield "tensor_apply n=m=12 (sparse P)", (kernels._tensor_apply_nb, kernels._tensor_apply_np), (L, P)

    perms = np.ascontiguousarray(all_permutations(7))
    C = rng.random((7, 7))
    yield "perm_linear_values n=7", (kernels._perm_linear_values_nb, kernels._perm_linear_values_np), (C, perms)

    L7 = rng.normal(size=(7, 7, 7, 7))
    yield "perm_quad_values n=7", (kernels._perm_quad_values_nb, kernels._perm_quad_values_np), (L7, perms)

    C = rng.random((8, 8))
    rows, cols = np.nonzero(np.eye(8, k=0) + np.eye(8, k=1) + np.eye(8, k=-7) > 0)
    args = (C, rows.astype(np.int64), cols.astype(np.int64), 3, np.inf)  # nothing counts as a violation: full scan
    yield "monotonicity_scan 16 pairs N<=3", (kernels._monotonicity_scan_nb, kernels._monotonicity_scan_np), args

    a, b = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    yield "basis_flows 4x4", (kernels._basis_flows_nb, kernels._basis_flows_py), (a, b, 1e-12)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':<34}{'numba [ms]':>12}{'numpy [ms]':>12}{'ratio':>8}")
    for name, (nb, ref), fargs in cases(rng):
        t_nb = best_of(lambda: nb(*fargs), args.repeat)
        t_np = best_of(lambda: ref(*fargs), args.repeat)
        print(f"{name:<34}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>8.1f}")

    print()
    print("objective evaluation (square loss, uniform)")
    for n in (16, 32):
        X = rng.normal(size=(n, 2))
        C = ((X[:, None] - X[None]) ** 2).sum(-1)
        w = np.full(n, 1.0 / n)
        P = np.outer(w, w)
        L = build_dense_tensor("square", C, C)
        t_d = best_of(lambda: gw_objective_dense(L, P), args.repeat)
        t_s = best_of(lambda: gw_objective_separable("square", C, C, w, w, P), args.repeat)
        print(f"  n=m={n:<4} dense {t_d * 1e3:8.3f} ms   separable {t_s * 1e3:8.3f} ms")


if __name__ == "__main__":
    main()
