"""Numba-compiled kernels; loop bodies mirror the numpy reference exactly.

Accumulation order matches `reference` (sequential over segments, per
channel), so the two backends produce bit-identical results.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TICK_US = 0.1

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _bin_expected_counts(start_ticks, dur_ticks, rates, bin_ticks, n_bins):
    n_seg = start_ticks.shape[0]
    n_ch = rates.shape[1]
    cum = np.zeros((n_seg + 1, n_ch), dtype=np.float64)
    for s in range(n_seg):
        d_us = dur_ticks[s] * TICK_US
        for c in range(n_ch):
            cum[s + 1, c] = cum[s, c] + rates[s, c] * d_us

    out = np.empty((n_bins, n_ch), dtype=np.float64)
    prev = np.empty(n_ch, dtype=np.float64)
    seg = 0
    for e in range(n_bins + 1):
        edge = np.int64(e) * np.int64(bin_ticks)
        while seg + 1 < n_seg and start_ticks[seg + 1] <= edge:
            seg += 1
        frac_us = (edge - start_ticks[seg]) * TICK_US
        for c in range(n_ch):
            val = cum[seg, c] + rates[seg, c] * frac_us
            if e > 0:
                out[e - 1, c] = val - prev[c]
            prev[c] = val
    return out


@njit(**_JIT)
def _merge_partitions(a, b, total_ticks):
    na, nb = a.shape[0], b.shape[0]
    starts = np.empty(na + nb, dtype=np.int64)
    idx_a = np.empty(na + nb, dtype=np.int64)
    idx_b = np.empty(na + nb, dtype=np.int64)
    i = j = k = 0
    while i < na or j < nb:
        if j >= nb or (i < na and a[i] <= b[j]):
            t = a[i]
        else:
            t = b[j]
        while i < na and a[i] == t:
            i += 1
        while j < nb and b[j] == t:
            j += 1
        starts[k] = t
        idx_a[k] = i - 1
        idx_b[k] = j - 1
        k += 1
    starts = starts[:k].copy()
    idx_a = idx_a[:k].copy()
    idx_b = idx_b[:k].copy()
    durs = np.empty(k, dtype=np.int64)
    for m in range(k - 1):
        durs[m] = starts[m + 1] - starts[m]
    durs[k - 1] = total_ticks - starts[k - 1]
    return starts, durs, idx_a, idx_b


@njit(**_JIT)
def _autocorrelation(x, max_lag):
    n = x.shape[0]
    mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    xc = np.empty(n, dtype=np.float64)
    for i in range(n):
        xc[i] = x[i] - mean
    denom = 0.0
    for i in range(n):
        denom += xc[i] * xc[i]
    rho = np.empty(max_lag + 1, dtype=np.float64)
    rho[0] = 1.0
    for k in range(1, max_lag + 1):
        acc = 0.0
        for i in range(n - k):
            acc += xc[i] * xc[i + k]
        rho[k] = acc / denom
    return rho


def bin_expected_counts(start_ticks, dur_ticks, rates_per_us, bin_ticks, n_bins):
    starts = np.ascontiguousarray(start_ticks, dtype=np.int64)
    durs = np.ascontiguousarray(dur_ticks, dtype=np.int64)
    rates = np.ascontiguousarray(rates_per_us, dtype=np.float64)
    return _bin_expected_counts(starts, durs, rates, np.int64(bin_ticks), np.int64(n_bins))


def merge_partitions(starts_a, starts_b, total_ticks):
    a = np.ascontiguousarray(starts_a, dtype=np.int64)
    b = np.ascontiguousarray(starts_b, dtype=np.int64)
    return _merge_partitions(a, b, np.int64(total_ticks))


def autocorrelation(x, max_lag):
    x = np.ascontiguousarray(x, dtype=np.float64)
    xc = x - x.mean()
    if float(np.dot(xc, xc)) == 0.0:
        raise ValueError("zero-variance series: autocorrelation undefined")
    return _autocorrelation(x, int(max_lag))
