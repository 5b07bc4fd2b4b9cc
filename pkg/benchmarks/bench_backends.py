#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the pieces that dominate a Monte Carlo replicate: the two
maximum-likelihood fits, the three test statistics, and one profile-bound
search.  Run as ``python benchmarks/bench_backends.py [replicates]``.
"""

import sys
import time

import numpy as np

from stratrd._backend import available_backends, get_kernels

ROWS = np.array(
    [
        [8, 2, 8, 9, 3, 11, 2, 2, 10, 2],
        [6, 6, 10, 7, 24, 3, 1, 5, 22, 14],
        [4, 1, 3, 8, 11, 1, 2, 6, 7, 11],
    ],
    dtype=float,
)


def bench(kern, reps):
    h = kern.prepare_counts(ROWS)
    timings = {}

    def timeit(name, fn, n):
        t0 = time.perf_counter()
        for _ in range(n):
            fn()
        timings[name] = (time.perf_counter() - t0) / n * 1e6  # microseconds

    up = kern.fit_unconstrained(h, 10000, 1e-10, 1e-8)
    cp = kern.fit_constrained(h, up[0], up[1], up[2], 10000, 1e-10, 1e-8)
    cp2 = [cp[1][s] - cp[0] for s in range(3)]
    ll0 = kern.loglik(h, cp[1], cp2, cp[2])

    timeit("fit_unconstrained", lambda: kern.fit_unconstrained(h, 10000, 1e-10, 1e-8), reps)
    timeit(
        "fit_constrained",
        lambda: kern.fit_constrained(h, up[0], up[1], up[2], 10000, 1e-10, 1e-8),
        reps,
    )
    timeit(
        "fit_conditional",
        lambda: kern.fit_conditional(h, cp[0] + 0.05, cp[1], cp[2], 10000, 1e-10, 1e-8),
        reps,
    )
    timeit("score_stat", lambda: kern.score_stat(h, cp[1], cp2, cp[2]), reps)
    timeit("wald_stat", lambda: kern.wald_stat(h, up[0], up[1], up[2]), reps)
    timeit(
        "profile_bound",
        lambda: kern.ci_bound_search(
            h, 0, 1, cp[0], cp[1], cp[2], ll0, 3.8415, 1e-4, 10000, 1e-10, 1e-8
        ),
        max(reps // 10, 1),
    )
    return timings


def main():
    reps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    backends = available_backends()
    results = {name: bench(get_kernels(name), reps) for name in backends}
    names = sorted(results[backends[0]])
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for n in names:
        row = f"{n:<{width}}"
        for b in backends:
            row += f"{results[b][n]:>12.1f}us"
        if len(backends) == 2:
            row += f"{results['python'][n] / results['compiled'][n]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
