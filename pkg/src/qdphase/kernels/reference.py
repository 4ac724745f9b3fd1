"""Pure-numpy implementations of the hot numeric kernels.

These are the fallback path (QDPHASE_BACKEND=numpy) and the comparison
baseline for the numba-compiled versions in `accel`.  The bin-integration
and partition-merge kernels perform the same operations in the same order
in both backends, so those results agree bit for bit; the autocorrelation
differs only by float summation order (BLAS vs plain loop).
"""

from __future__ import annotations

import numpy as np

TICK_US = 0.1  # internal time quantum


def bin_expected_counts(
    start_ticks: np.ndarray,
    dur_ticks: np.ndarray,
    rates_per_us: np.ndarray,
    bin_ticks: int,
    n_bins: int,
) -> np.ndarray:
    """Integrate piecewise-constant channel rates over uniform time bins.

    start_ticks/dur_ticks describe contiguous segments on a 0.1 us tick
    grid; rates_per_us is (n_seg, n_ch).  Returns (n_bins, n_ch) expected
    counts, exact across segment boundaries: the cumulative integral is
    evaluated at every bin edge and differenced.
    """
    starts = np.ascontiguousarray(start_ticks, dtype=np.int64)
    rates = np.ascontiguousarray(rates_per_us, dtype=np.float64)
    dur_us = np.ascontiguousarray(dur_ticks, dtype=np.int64) * TICK_US
    n_seg = starts.shape[0]

    cum = np.zeros((n_seg + 1, rates.shape[1]), dtype=np.float64)
    np.cumsum(rates * dur_us[:, None], axis=0, out=cum[1:])

    edges = np.arange(n_bins + 1, dtype=np.int64) * np.int64(bin_ticks)
    idx = np.searchsorted(starts, edges, side="right") - 1
    idx = np.clip(idx, 0, n_seg - 1)
    frac_us = (edges - starts[idx]) * TICK_US
    at_edges = cum[idx] + rates[idx] * frac_us[:, None]
    return np.diff(at_edges, axis=0)


def merge_partitions(starts_a: np.ndarray, starts_b: np.ndarray, total_ticks: int):
    """Refine two partitions of [0, total_ticks) into one.

    Each input is a sorted array of segment start ticks beginning at 0.
    Returns (starts, durs, idx_a, idx_b) where idx_* map each merged segment
    back to the source segment active during it.
    """
    a = np.ascontiguousarray(starts_a, dtype=np.int64)
    b = np.ascontiguousarray(starts_b, dtype=np.int64)
    starts = np.union1d(a, b)
    idx_a = np.searchsorted(a, starts, side="right") - 1
    idx_b = np.searchsorted(b, starts, side="right") - 1
    durs = np.diff(np.append(starts, np.int64(total_ticks)))
    return starts, durs, idx_a, idx_b


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation of a 1-d series, normalized to lag 0.

    rho[k] = sum_i (x_i - xbar)(x_{i+k} - xbar) / sum_i (x_i - xbar)^2.
    Raises ValueError on a zero-variance series.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        raise ValueError("zero-variance series: autocorrelation undefined")
    rho = np.empty(max_lag + 1, dtype=np.float64)
    rho[0] = 1.0
    for k in range(1, max_lag + 1):
        rho[k] = float(np.dot(xc[:-k], xc[k:])) / denom
    return rho
