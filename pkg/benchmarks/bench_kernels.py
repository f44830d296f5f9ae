#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

The three kernels dominate generator runtime: arbitrary-coordinate
trilinear/nearest sampling (resampling, warping, field integration) and
separable 1D correlation (slice-thickness blur).

Usage: python benchmarks/bench_kernels.py [--size 128] [--repeats 5]
"""

import argparse
import time

import numpy as np

from synthbrain._kernels import fallback

try:
    from synthbrain._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(size, repeats):
    rng = np.random.default_rng(0)
    vol = np.ascontiguousarray(rng.normal(size=(size, size, size)))
    n = size ** 3
    ci = rng.uniform(0, size - 1, n)
    cj = rng.uniform(0, size - 1, n)
    ck = rng.uniform(0, size - 1, n)
    kernel = np.ascontiguousarray(np.exp(-0.5 * (np.arange(-9, 10) / 3.0) ** 2))
    kernel /= kernel.sum()

    backends = [("numpy", fallback)]
    if _core is not None:
        backends.append(("compiled", _core))
    else:
        print("compiled kernels unavailable; benchmarking fallback only")

    cases = {
        "trilinear": lambda impl: impl.sample_trilinear(vol, ci, cj, ck, 0),
        "nearest": lambda impl: impl.sample_nearest(vol, ci, cj, ck, 0),
        "correlate1d(axis0)": lambda impl: impl.correlate1d(vol, kernel, 0),
        "correlate1d(axis2)": lambda impl: impl.correlate1d(vol, kernel, 2),
    }

    print(f"volume {size}^3, {n/1e6:.1f} M sample points, "
          f"kernel length {len(kernel)}, best of {repeats}")
    header = f"{'kernel':<20}" + "".join(f"{name:>14}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for case, call in cases.items():
        times = [timeit(lambda impl=impl: call(impl), repeats)
                 for _, impl in backends]
        row = f"{case:<20}" + "".join(f"{t * 1e3:>12.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    # agreement check on the benchmark inputs
    if _core is not None:
        a = fallback.sample_trilinear(vol, ci[:10000], cj[:10000], ck[:10000], 0)
        b = np.asarray(_core.sample_trilinear(vol, ci[:10000], cj[:10000],
                                              ck[:10000], 0))
        print(f"max |numpy - compiled| on trilinear: {np.abs(a - b).max():.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    run(args.size, args.repeats)
