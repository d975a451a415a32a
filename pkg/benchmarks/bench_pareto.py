#!/usr/bin/env python3
"""Timing comparison of the dominance-mask backends.

Both produce identical masks (the test suite enforces it); this measures
the speed gap on random point sets so the default backend choice stays
justified. Run:

    python benchmarks/bench_pareto.py [--sizes 100,1000,5000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from visioncost._pareto import HAS_NUMBA, dominated_mask_numpy

if HAS_NUMBA:
    from visioncost._pareto import dominated_mask_numba


def time_one(fn, values, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(values)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="100,1000,5000,20000")
    parser.add_argument("--objectives", default="2,3")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    dims = [int(m) for m in args.objectives.split(",")]
    rng = np.random.default_rng(args.seed)

    if HAS_NUMBA:
        dominated_mask_numba(rng.random((8, 2)))  # trigger jit compile

    print(f"{'points':>8} {'objs':>5} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>8}")
    for n in sizes:
        for m in dims:
            values = rng.integers(0, 10 * n, size=(n, m)).astype(np.float64)
            t_np = time_one(dominated_mask_numpy, values, args.repeats)
            if HAS_NUMBA:
                t_nb = time_one(dominated_mask_numba, values, args.repeats)
                assert (
                    dominated_mask_numpy(values) == np.asarray(dominated_mask_numba(values))
                ).all()
                print(
                    f"{n:>8} {m:>5} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} "
                    f"{t_np / t_nb:>7.1f}x"
                )
            else:
                print(f"{n:>8} {m:>5} {t_np * 1e3:>12.2f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
