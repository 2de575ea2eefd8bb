#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--frames 2000000] [--repeats 5]

The numba path warms up once before timing so compilation is excluded. The
same arrays feed both backends and the results are checked to agree before
any timing is reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from slowfastvad.kernels import _numba, _numpy


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=2_000_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    scores = rng.uniform(0, 1, size=args.frames)
    starts = np.arange(0, args.frames - 8, 8, dtype=np.int64)
    lengths = np.full(starts.size, 8, dtype=np.int64)
    labels = rng.integers(0, 2, size=args.frames)

    cases = [
        (
            f"window_entropies ({starts.size} windows of 8, 10 bins)",
            lambda m: m.window_entropies(scores, starts, lengths, 10),
        ),
        (
            f"gaussian_smooth ({args.frames} frames, sigma 2)",
            lambda m: m.gaussian_smooth(scores, 2.0),
        ),
        (
            f"rank_auc ({args.frames} frames)",
            lambda m: m.rank_auc(scores, labels),
        ),
    ]

    print(f"{'kernel':<55} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, call in cases:
        got_numpy = call(_numpy)
        got_numba = call(_numba)  # also warms the JIT
        np.testing.assert_allclose(got_numpy, got_numba, atol=1e-10)
        t_numpy = timeit(lambda: call(_numpy), args.repeats)
        t_numba = timeit(lambda: call(_numba), args.repeats)
        print(f"{name:<55} {t_numpy * 1e3:>8.1f}ms {t_numba * 1e3:>8.1f}ms {t_numpy / t_numba:>8.1f}x")


if __name__ == "__main__":
    main()
