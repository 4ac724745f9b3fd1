"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each kernel on simulation-scale workloads and prints a timing table.
Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from qdphase.kernels import reference

try:
    from qdphase.kernels import accel
except ImportError:
    accel = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_workloads(rng):
    total_ticks = 10_000_000 * 10  # 1e7 us horizon
    n_seg = 50_000
    cuts = np.sort(rng.choice(np.arange(1, total_ticks), size=n_seg - 1, replace=False))
    starts = np.concatenate([[0], cuts]).astype(np.int64)
    durs = np.diff(np.concatenate([starts, [total_ticks]])).astype(np.int64)
    rates = rng.uniform(0.0, 1.0, size=(n_seg, 4))
    bin_ticks = 1000
    n_bins = total_ticks // bin_ticks

    b_starts = np.sort(
        np.concatenate([[0], rng.choice(np.arange(1, total_ticks), size=40_000, replace=False)])
    ).astype(np.int64)

    series = rng.poisson(20.0, 200_000).astype(np.float64)

    return {
        "bin_expected_counts (50k seg, 100k bins)": lambda impl: impl.bin_expected_counts(
            starts, durs, rates, bin_ticks, n_bins
        ),
        "merge_partitions (50k x 40k segments)": lambda impl: impl.merge_partitions(
            starts, b_starts, total_ticks
        ),
        "autocorrelation (200k bins, 512 lags)": lambda impl: impl.autocorrelation(series, 512),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    workloads = make_workloads(rng)

    if accel is not None:
        # trigger JIT compilation outside the timed region
        for fn in workloads.values():
            fn(accel)

    name_w = max(len(k) for k in workloads)
    print(f"{'kernel':<{name_w}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, fn in workloads.items():
        t_np = best_of(lambda: fn(reference), args.repeats)
        if accel is not None:
            t_nb = best_of(lambda: fn(accel), args.repeats)
            print(f"{name:<{name_w}}  {t_np*1e3:>8.2f}ms  {t_nb*1e3:>8.2f}ms  {t_np/t_nb:>7.1f}x")
        else:
            print(f"{name:<{name_w}}  {t_np*1e3:>8.2f}ms  {'n/a':>10}  {'n/a':>8}")


if __name__ == "__main__":
    main()
