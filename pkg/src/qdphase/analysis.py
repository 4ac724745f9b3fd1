"""Count-based estimators: per-bin phase lower bound, herald selection,
rate histograms, interacting-fraction inference and timescale extraction.

All estimators are truth-blind: they read only the four APD count columns.
Herald selection reads only APD-1/2; the phase is always computed from
APD-3/4, so selection never post-selects on the quantity being measured.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import kernels
from .detection import BinArray
from .errors import EstimatorError

FIG2_HEADER = ["bucket_lo_khz", "bucket_hi_khz", "n_bins", "pooled_v", "pooled_h",
               "phi_lb_rad", "sigma_rad"]
FIG3_HEADER = ["apd1_lo", "apd1_hi", "apd2_lo", "apd2_hi", "n_bins", "pooled_v",
               "pooled_h", "phi_lb_rad"]
SWEEP_HEADER = ["bin_width_us", "contrast", "contrast_err"]
AUTOCORR_HEADER = ["lag_us", "correlation", "correlation_err"]

# fitted timescale reported when the decay is flat over the sweep range
SWEEP_TAU_BOUND_US = 1e7


@dataclass(frozen=True)
class PhaseEstimate:
    """Lower-bound phase with Poisson-propagated uncertainty.

    sigma_phi comes from first-order propagation of independent Poisson
    errors on (n_v, n_h) in cos space, transformed through arccos by
    evaluating both interval endpoints (robust at the clamp boundaries);
    zero counts enter the variance with a floor of one count.
    """

    phi_lb: float
    sigma_phi: float
    n_v: int
    n_h: int
    herald_coords: tuple[float, float] = (float("nan"), float("nan"))


@dataclass(frozen=True)
class HeraldCriteria:
    """Count-rate thresholds (kHz) on the heralding arm."""

    apd2_min_khz: float = 100.0
    apd1_max_khz: float = 400.0
    mode: str = "double_channel"

    def __post_init__(self) -> None:
        if self.apd2_min_khz < 0.0 or self.apd1_max_khz < 0.0:
            raise ValueError("herald thresholds must be >= 0")
        if self.mode not in ("single_channel", "double_channel"):
            raise ValueError(f"mode must be single_channel/double_channel, got {self.mode!r}")


def phase_lb(n_v: int, n_h: int, herald_coords=(float("nan"), float("nan"))) -> PhaseEstimate:
    """Eq.-style estimate phi = arccos[(n_v - n_h)/(n_v + n_h)] for one bin."""
    if n_v < 0 or n_h < 0:
        raise ValueError("counts must be non-negative")
    n = n_v + n_h
    if n == 0:
        raise EstimatorError("empty bin: phase undefined with zero counts")
    c = (n_v - n_h) / n
    c = max(-1.0, min(1.0, c))
    vf = max(n_v, 1)
    hf = max(n_h, 1)
    sigma_c = math.sqrt(4.0 * vf * hf / n**3)
    lo = math.acos(max(-1.0, min(1.0, c + sigma_c)))
    hi = math.acos(max(-1.0, min(1.0, c - sigma_c)))
    return PhaseEstimate(
        phi_lb=math.acos(c),
        sigma_phi=0.5 * (hi - lo),
        n_v=int(n_v),
        n_h=int(n_h),
        herald_coords=herald_coords,
    )


def perbin_phases(bins: BinArray, mask: np.ndarray | None = None) -> np.ndarray:
    """Per-bin phase estimates; bins with zero measurement counts are skipped."""
    counts = bins.counts if mask is None else bins.counts[mask]
    n = counts[:, 2] + counts[:, 3]
    ok = n > 0
    c = np.clip((counts[ok, 2] - counts[ok, 3]) / n[ok], -1.0, 1.0)
    return np.arccos(c)


def pooled_phase(bins: BinArray, mask: np.ndarray | None = None) -> PhaseEstimate:
    """Phase of the summed APD-3/4 counts over a set of bins."""
    counts = bins.counts if mask is None else bins.counts[mask]
    if counts.shape[0] == 0:
        raise EstimatorError("no heralded bins: empty selection")
    n_v = int(counts[:, 2].sum())
    n_h = int(counts[:, 3].sum())
    kfac = 1000.0 / bins.bin_width_us
    coords = (float(counts[:, 0].mean() * kfac), float(counts[:, 1].mean() * kfac))
    return phase_lb(n_v, n_h, herald_coords=coords)


def herald_select(bins: BinArray, crit: HeraldCriteria) -> np.ndarray:
    """Boolean mask of bins passing the herald criteria (APD-1/2 only)."""
    r2 = bins.rates_khz(1)
    keep = r2 >= crit.apd2_min_khz
    if crit.mode == "double_channel":
        keep &= bins.rates_khz(0) <= crit.apd1_max_khz
    return keep


def interacting_fraction(phi_lb_rad: float) -> float:
    """Fraction of photons that interacted, under the full-pi-shift model.

    With every interacting photon rotated by pi and a V-polarized background
    fraction b, cos(phi_lb) = 2b - 1, so f = 1 - b = (1 - cos phi_lb)/2.
    Only meaningful for phi_lb > pi/2.
    """
    if not (math.pi / 2.0 < phi_lb_rad <= math.pi + 1e-12):
        raise EstimatorError(
            f"interacting-fraction model needs phi in (pi/2, pi], got {phi_lb_rad:.4f} rad"
        )
    return 0.5 * (1.0 - math.cos(phi_lb_rad))


@dataclass
class Fig2Bucket:
    lo_khz: float
    hi_khz: float
    n_bins: int
    pooled_v: int
    pooled_h: int
    phi_lb: float
    sigma_phi: float


@dataclass
class Fig2Histogram:
    """Mean phase versus APD-2 count rate (single-channel herald view)."""

    bucket_khz: float
    buckets: list[Fig2Bucket] = field(default_factory=list)


def figure2_histogram(bins: BinArray, bucket_khz: float = 10.0) -> Fig2Histogram:
    """Pool APD-3/4 counts per APD-2-rate bucket."""
    if bins.n_bins < 1:
        raise EstimatorError("no bins to histogram")
    if not bucket_khz > 0.0:
        raise ValueError("bucket_khz must be > 0")
    r2 = bins.rates_khz(1)
    idx = np.floor(r2 / bucket_khz).astype(np.int64)
    hist = Fig2Histogram(bucket_khz=bucket_khz)
    for k in np.unique(idx):
        m = idx == k
        v = int(bins.counts[m, 2].sum())
        h = int(bins.counts[m, 3].sum())
        if v + h == 0:
            continue
        est = phase_lb(v, h)
        hist.buckets.append(
            Fig2Bucket(
                lo_khz=float(k * bucket_khz),
                hi_khz=float((k + 1) * bucket_khz),
                n_bins=int(m.sum()),
                pooled_v=v,
                pooled_h=h,
                phi_lb=est.phi_lb,
                sigma_phi=est.sigma_phi,
            )
        )
    return hist


@dataclass
class Fig3Cell:
    apd1_lo: float
    apd1_hi: float
    apd2_lo: float
    apd2_hi: float
    n_bins: int
    pooled_v: int
    pooled_h: int
    phi_lb: float


@dataclass
class Fig3Histogram:
    """2D aggregation keyed by (APD-1 rate, APD-2 rate)."""

    apd1_bucket_khz: float
    apd2_bucket_khz: float
    cells: list[Fig3Cell] = field(default_factory=list)

    def region_mean_phi(self, apd1_range: tuple[float, float],
                        apd2_range: tuple[float, float]) -> float:
        """Unweighted mean of cell phases whose cell lies inside the ranges."""
        phis = [
            c.phi_lb
            for c in self.cells
            if apd1_range[0] <= c.apd1_lo and c.apd1_hi <= apd1_range[1]
            and apd2_range[0] <= c.apd2_lo and c.apd2_hi <= apd2_range[1]
        ]
        if not phis:
            raise EstimatorError("no histogram cells inside the requested region")
        return float(np.mean(phis))


def figure3_histogram(
    bins: BinArray, apd1_bucket_khz: float = 25.0, apd2_bucket_khz: float = 10.0
) -> Fig3Histogram:
    """Pool phase estimates per (APD-1, APD-2) rate cell."""
    if bins.n_bins < 1:
        raise EstimatorError("no bins to histogram")
    if not (apd1_bucket_khz > 0.0 and apd2_bucket_khz > 0.0):
        raise ValueError("bucket widths must be > 0")
    i1 = np.floor(bins.rates_khz(0) / apd1_bucket_khz).astype(np.int64)
    i2 = np.floor(bins.rates_khz(1) / apd2_bucket_khz).astype(np.int64)
    key = i1 * (i2.max() + 1 if i2.size else 1) + i2
    hist = Fig3Histogram(apd1_bucket_khz=apd1_bucket_khz, apd2_bucket_khz=apd2_bucket_khz)
    for k in np.unique(key):
        m = key == k
        v = int(bins.counts[m, 2].sum())
        h = int(bins.counts[m, 3].sum())
        if v + h == 0:
            continue
        k1 = int(i1[m][0])
        k2 = int(i2[m][0])
        est = phase_lb(v, h)
        hist.cells.append(
            Fig3Cell(
                apd1_lo=float(k1 * apd1_bucket_khz),
                apd1_hi=float((k1 + 1) * apd1_bucket_khz),
                apd2_lo=float(k2 * apd2_bucket_khz),
                apd2_hi=float((k2 + 1) * apd2_bucket_khz),
                n_bins=int(m.sum()),
                pooled_v=v,
                pooled_h=h,
                phi_lb=est.phi_lb,
            )
        )
    return hist


def merge_fig2(a: Fig2Histogram, b: Fig2Histogram) -> Fig2Histogram:
    """Deterministic merge of partial aggregations (for parallel reduction)."""
    if a.bucket_khz != b.bucket_khz:
        raise ValueError("cannot merge histograms with different bucket widths")
    acc: dict[float, list] = {}
    for bucket in list(a.buckets) + list(b.buckets):
        cell = acc.setdefault(bucket.lo_khz, [bucket.hi_khz, 0, 0, 0])
        cell[1] += bucket.n_bins
        cell[2] += bucket.pooled_v
        cell[3] += bucket.pooled_h
    out = Fig2Histogram(bucket_khz=a.bucket_khz)
    for lo in sorted(acc):
        hi, n, v, h = acc[lo]
        est = phase_lb(v, h)
        out.buckets.append(
            Fig2Bucket(lo_khz=lo, hi_khz=hi, n_bins=n, pooled_v=v, pooled_h=h,
                       phi_lb=est.phi_lb, sigma_phi=est.sigma_phi)
        )
    return out


def merge_fig3(a: Fig3Histogram, b: Fig3Histogram) -> Fig3Histogram:
    """Deterministic merge of partial 2D aggregations."""
    if (a.apd1_bucket_khz, a.apd2_bucket_khz) != (b.apd1_bucket_khz, b.apd2_bucket_khz):
        raise ValueError("cannot merge histograms with different cell sizes")
    acc: dict[tuple[float, float], list] = {}
    for cell in list(a.cells) + list(b.cells):
        rec = acc.setdefault((cell.apd1_lo, cell.apd2_lo), [cell.apd1_hi, cell.apd2_hi, 0, 0, 0])
        rec[2] += cell.n_bins
        rec[3] += cell.pooled_v
        rec[4] += cell.pooled_h
    out = Fig3Histogram(apd1_bucket_khz=a.apd1_bucket_khz, apd2_bucket_khz=a.apd2_bucket_khz)
    for (lo1, lo2) in sorted(acc):
        hi1, hi2, n, v, h = acc[(lo1, lo2)]
        out.cells.append(
            Fig3Cell(apd1_lo=lo1, apd1_hi=hi1, apd2_lo=lo2, apd2_hi=hi2,
                     n_bins=n, pooled_v=v, pooled_h=h, phi_lb=phase_lb(v, h).phi_lb)
        )
    return out


def rate_autocorrelation(
    bins: BinArray, channel: int = 1, max_lag: int = 60
) -> tuple[np.ndarray, np.ndarray]:
    """Biased per-bin count autocorrelation on one APD, normalized to lag 0.

    Requires a stream at least 10x max_lag long.  Lag 0 carries the Poisson
    shot-noise spike; fits should use lags >= 1.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if bins.n_bins < 10 * max_lag:
        raise EstimatorError(
            f"stream too short: {bins.n_bins} bins < 10 x max_lag ({10 * max_lag})"
        )
    try:
        rho = kernels.autocorrelation(bins.counts[:, channel].astype(np.float64), max_lag)
    except ValueError as exc:
        raise EstimatorError(str(exc)) from exc
    lags_us = np.arange(max_lag + 1, dtype=np.float64) * bins.bin_width_us
    return lags_us, rho


def fit_exponential_decay(
    x: np.ndarray,
    y: np.ndarray,
    sigma: np.ndarray | None = None,
    with_offset: bool = True,
    tau_bound: float = SWEEP_TAU_BOUND_US,
) -> tuple[float, float, float, float]:
    """Least-squares fit of y = A exp(-x/tau) + C0; returns (tau, A, C0, rms)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if with_offset:
        def f(t, a, tau, c0):
            return a * np.exp(-t / tau) + c0
        p0 = (max(y[0] - y[-1], 1e-6), float(np.median(x)), float(y[-1]))
        bounds = ([0.0, 1.0, -np.inf], [np.inf, tau_bound, np.inf])
    else:
        def f(t, a, tau):
            return a * np.exp(-t / tau)
        p0 = (max(y[0], 1e-6), float(np.median(x)))
        bounds = ([0.0, 1.0], [np.inf, tau_bound])
    try:
        popt, _ = optimize.curve_fit(
            f, x, y, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
            bounds=bounds, maxfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        raise EstimatorError(f"exponential fit failed: {exc}") from exc
    rms = float(np.sqrt(np.mean((f(x, *popt) - y) ** 2)))
    tau = float(popt[1])
    amp = float(popt[0])
    c0 = float(popt[2]) if with_offset else 0.0
    return tau, amp, c0, rms


@dataclass
class SweepResult:
    bin_widths_us: list[float]
    contrast: list[float]
    contrast_err: list[float]
    fitted_tau_us: float
    fit_residual: float
    tau_at_bound: bool = False


def timescale_sweep(
    make_bins: Callable[[float], BinArray],
    bin_widths_us: Sequence[float],
    crit: HeraldCriteria | None = None,
) -> SweepResult:
    """Herald-contrast knee versus bin width.

    For each width the contrast is the mean per-bin phase over
    double-herald-selected bins minus the global mean per-bin phase; a
    single exponential with offset is fitted to contrast(width).  When the
    contrast is flat the fit runs into the tau bound and the bound value is
    returned (tau_at_bound set).
    """
    widths = sorted(float(w) for w in bin_widths_us)
    if len(widths) < 4:
        raise EstimatorError(f"need >= 4 bin widths for the sweep, got {len(widths)}")
    if len(set(widths)) != len(widths):
        raise EstimatorError("bin widths must be distinct")
    crit = crit or HeraldCriteria()
    contrast, errs = [], []
    for w in widths:
        bins = make_bins(w)
        sel = herald_select(bins, crit)
        phis_all = perbin_phases(bins)
        phis_sel = perbin_phases(bins, sel)
        if phis_sel.size < 2 or phis_all.size < 2:
            raise EstimatorError(f"selection too small at width {w} us to form a contrast")
        c = float(phis_sel.mean() - phis_all.mean())
        e = math.hypot(
            float(phis_sel.std(ddof=1)) / math.sqrt(phis_sel.size),
            float(phis_all.std(ddof=1)) / math.sqrt(phis_all.size),
        )
        contrast.append(c)
        errs.append(max(e, 1e-9))
    tau, amp, _c0, rms = fit_exponential_decay(
        np.asarray(widths), np.asarray(contrast), sigma=np.asarray(errs), with_offset=True
    )
    spread = max(contrast) - min(contrast)
    threshold = max(0.15 * spread, 20.0 * float(np.median(errs)), 1e-9)
    # a decay amplitude indistinguishable from the noise means a flat contrast:
    # the knee is unresolved, so the bound value stands in as the sentinel
    at_bound = tau >= 0.99 * SWEEP_TAU_BOUND_US or amp < 5.0 * float(np.median(errs))
    if at_bound:
        tau = SWEEP_TAU_BOUND_US
    elif rms > threshold:
        raise EstimatorError(
            f"sweep fit residual {rms:.3g} exceeds threshold {threshold:.3g}"
        )
    return SweepResult(
        bin_widths_us=widths,
        contrast=contrast,
        contrast_err=errs,
        fitted_tau_us=float(tau),
        fit_residual=rms,
        tau_at_bound=at_bound,
    )


def fit_jitter_timescale(
    bins: BinArray, channel: int = 1, max_lag: int = 60
) -> tuple[float, float]:
    """Jitter correlation time from the APD count autocorrelation (lags >= 1)."""
    lags_us, rho = rate_autocorrelation(bins, channel=channel, max_lag=max_lag)
    tau, _amp, _c0, rms = fit_exponential_decay(
        lags_us[1:], rho[1:], with_offset=False
    )
    return tau, rms


def write_fig2_csv(hist: Fig2Histogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIG2_HEADER)
        for b in hist.buckets:
            writer.writerow(
                [f"{b.lo_khz:.9g}", f"{b.hi_khz:.9g}", b.n_bins, b.pooled_v, b.pooled_h,
                 f"{b.phi_lb:.9g}", f"{b.sigma_phi:.9g}"]
            )


def write_fig3_csv(hist: Fig3Histogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIG3_HEADER)
        for c in hist.cells:
            writer.writerow(
                [f"{c.apd1_lo:.9g}", f"{c.apd1_hi:.9g}", f"{c.apd2_lo:.9g}",
                 f"{c.apd2_hi:.9g}", c.n_bins, c.pooled_v, c.pooled_h, f"{c.phi_lb:.9g}"]
            )


def write_sweep_csv(result: SweepResult, path) -> None:
    """Sweep rows plus a footer row carrying the fitted timescale."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for w, c, e in zip(result.bin_widths_us, result.contrast, result.contrast_err):
            writer.writerow([f"{w:.9g}", f"{c:.9g}", f"{e:.9g}"])
        writer.writerow(["fitted_tau_us", f"{result.fitted_tau_us:.9g}",
                         f"{result.fit_residual:.9g}"])


def write_autocorr_csv(lags_us: np.ndarray, rho: np.ndarray, tau_us: float,
                       residual: float, n_bins: int, path) -> None:
    """Autocorrelation rows plus the same footer convention as the sweep CSV."""
    err = 1.0 / math.sqrt(max(n_bins, 1))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AUTOCORR_HEADER)
        for t, r in zip(lags_us, rho):
            writer.writerow([f"{t:.9g}", f"{r:.9g}", f"{err:.9g}"])
        writer.writerow(["fitted_tau_us", f"{tau_us:.9g}", f"{residual:.9g}"])
