"""Times the compiled estimator kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_backends.py [--repeats N]

The two hot paths are the hard plug-in CMI (called thousands of times by the
Monte-Carlo bias/concentration checkers) and the soft CMI value+gradient
(called once per training step). Matrix-heavy model math stays on BLAS either
way, so only these counting/log kernels are worth compiling.
"""

import argparse
import time

import numpy as np

from fairfront._backend import kernels
from fairfront.estimators import _hard_cmi_numpy, _soft_cmi_numpy


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    if kernels is None:
        print("compiled kernels not available; nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'size':>10}{'numpy':>12}{'cython':>12}{'speedup':>9}")

    for n in (256, 4096, 65536):
        u = np.ascontiguousarray(rng.integers(0, 4, n))
        y = np.ascontiguousarray(rng.integers(0, 2, n))
        z = np.ascontiguousarray(rng.integers(0, 3, n))
        calls = max(1, 20000 // max(n // 256, 1))
        t_np = timeit(lambda: [_hard_cmi_numpy(u, y, z, 4, 2, 3) for _ in range(calls)], args.repeats)
        t_cy = timeit(lambda: [kernels.hard_cmi(u, y, z, 4, 2, 3) for _ in range(calls)], args.repeats)
        print(f"{'hard_cmi x' + str(calls):<26}{n:>10}{t_np:>12.4f}{t_cy:>12.4f}{t_np / t_cy:>8.1f}x")

    for n in (256, 4096, 65536):
        k = 4
        p = np.ascontiguousarray(rng.dirichlet(np.ones(k), size=n))
        y = np.ascontiguousarray(rng.integers(0, 2, n))
        z = np.ascontiguousarray(rng.integers(0, 3, n))
        calls = max(1, 5000 // max(n // 256, 1))
        t_np = timeit(lambda: [_soft_cmi_numpy(p, y, z, 2, 3, True) for _ in range(calls)], args.repeats)
        t_cy = timeit(lambda: [kernels.soft_cmi(p, y, z, 2, 3, True) for _ in range(calls)], args.repeats)
        print(f"{'soft_cmi+grad x' + str(calls):<26}{n:>10}{t_np:>12.4f}{t_cy:>12.4f}{t_np / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
