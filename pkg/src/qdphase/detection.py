"""Poisson photon counting on the four APDs behind the 50:50 splitter.

APD-1 (V) and APD-2 (H) sit in the heralding arm, APD-3 (V) and APD-4 (H)
in the measurement arm.  Per-bin counts are drawn Poisson with means given
by the exact time integral of the piecewise-constant rates over each bin.
Sampling is split into fixed-size bin blocks, each with its own seed
substream, so results are byte-identical for any worker-thread count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataFormatError
from .optics import (
    ReflectionModel,
    SpinState,
    dilute_projections,
    effective_detuning,
    reflection_amplitudes,
    vh_projections,
)
from .trajectories import (
    _STREAM_BINS,
    TICKS_PER_US,
    RandomSeed,
    Trajectory,
    TrajectorySegment,
    _ticks,
)

APD_NAMES = ("apd1", "apd2", "apd3", "apd4")
COUNTS_HEADER = ["bin_index", "t_start_us"] + list(APD_NAMES)
TRUTH_HEADER = ["truth_detuning_ueV", "truth_spin", "truth_phase_rad"]

_BLOCK_BINS = 4096


@dataclass(frozen=True)
class DetectionConfig:
    """Detector-level rates (counts/us) and binning.

    total_detected_rate_per_us  detected flux entering the splitter
    splitter_ratio              fraction tapped to the heralding arm
    dark_rate_per_us            per-APD dark counts (apd1..apd4)
    herald_excess_rate_per_us   extra background on APD-1/2 only; together
                                with dark_rate_per_us[1] it sets the
                                off-resonance APD-2 floor (17 kHz default)
    bin_width_us                counting-bin width
    measure_background_fraction optional override of the background fraction
                                seen by the measurement arm; None means the
                                model's background_fraction applies to all
                                four detectors
    """

    total_detected_rate_per_us: float = 1.0
    splitter_ratio: float = 0.5
    dark_rate_per_us: tuple[float, float, float, float] = (0.0, 0.0, 1e-4, 1e-4)
    herald_excess_rate_per_us: float = 0.017
    bin_width_us: float = 100.0
    measure_background_fraction: float | None = None

    def __post_init__(self) -> None:
        if self.total_detected_rate_per_us < 0.0:
            raise ValueError("total_detected_rate_per_us must be >= 0")
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ValueError("splitter_ratio must be in (0, 1)")
        if len(self.dark_rate_per_us) != 4 or any(r < 0.0 for r in self.dark_rate_per_us):
            raise ValueError("dark_rate_per_us must be four non-negative rates")
        if self.herald_excess_rate_per_us < 0.0:
            raise ValueError("herald_excess_rate_per_us must be >= 0")
        if not self.bin_width_us > 0.0:
            raise ValueError("bin_width_us must be > 0")
        if self.measure_background_fraction is not None and not (
            0.0 <= self.measure_background_fraction < 1.0
        ):
            raise ValueError("measure_background_fraction must be in [0, 1)")

    @property
    def bin_ticks(self) -> int:
        return _ticks(self.bin_width_us)


@dataclass(frozen=True)
class BinTruth:
    """Ground-truth annotations attached to a simulated bin."""

    detuning_uev: float
    spin: SpinState
    phase_rad: float


@dataclass(frozen=True)
class BinRecord:
    bin_index: int
    t_start_us: float
    counts: tuple[int, int, int, int]
    truth: BinTruth | None = None


@dataclass
class BinArray:
    """Column-oriented stream of counting bins."""

    counts: np.ndarray  # (n_bins, 4) int64
    bin_width_us: float
    truth_detuning_uev: np.ndarray | None = None
    truth_spin: np.ndarray | None = None
    truth_phase_rad: np.ndarray | None = None

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def has_truth(self) -> bool:
        return self.truth_detuning_uev is not None

    def t_start_us(self) -> np.ndarray:
        return np.arange(self.n_bins, dtype=np.float64) * self.bin_width_us

    def rates_khz(self, channel: int) -> np.ndarray:
        """Per-bin count rate on one APD (0-based channel), in kHz."""
        return self.counts[:, channel] * (1000.0 / self.bin_width_us)

    def records(self):
        for i in range(self.n_bins):
            truth = None
            if self.has_truth:
                truth = BinTruth(
                    detuning_uev=float(self.truth_detuning_uev[i]),
                    spin=SpinState(int(self.truth_spin[i])),
                    phase_rad=float(self.truth_phase_rad[i]),
                )
            yield BinRecord(
                bin_index=i,
                t_start_us=i * self.bin_width_us,
                counts=tuple(int(c) for c in self.counts[i]),
                truth=truth,
            )

    def without_truth(self) -> "BinArray":
        return BinArray(counts=self.counts, bin_width_us=self.bin_width_us)


def segment_rates(model: ReflectionModel, cfg: DetectionConfig, traj: Trajectory) -> np.ndarray:
    """Per-segment expected rates (counts/us) on the four APDs."""
    v, h = vh_projections(model, traj.detuning_uev, traj.spin)
    vbar_h, hbar_h = dilute_projections(v, h, model.background_fraction)
    b_meas = (
        model.background_fraction
        if cfg.measure_background_fraction is None
        else cfg.measure_background_fraction
    )
    vbar_m, hbar_m = dilute_projections(v, h, b_meas)
    total = cfg.total_detected_rate_per_us
    s = cfg.splitter_ratio
    d = cfg.dark_rate_per_us
    e = cfg.herald_excess_rate_per_us
    return np.stack(
        [
            total * s * vbar_h + d[0] + e,
            total * s * hbar_h + d[1] + e,
            total * (1.0 - s) * vbar_m + d[2],
            total * (1.0 - s) * hbar_m + d[3],
        ],
        axis=1,
    )


def instantaneous_rates(
    model: ReflectionModel, cfg: DetectionConfig, seg: TrajectorySegment
) -> tuple[float, float, float, float]:
    """Expected APD rates (counts/us) while one trajectory segment is active."""
    traj = Trajectory(
        start_ticks=np.array([0], dtype=np.int64),
        dur_ticks=np.array([max(1, int(round(seg.duration_us * TICKS_PER_US)))], dtype=np.int64),
        detuning_uev=np.array([seg.detuning_uev]),
        spin=np.array([int(seg.spin)], dtype=np.int8),
        total_ticks=max(1, int(round(seg.duration_us * TICKS_PER_US))),
    )
    r = segment_rates(model, cfg, traj)[0]
    return float(r[0]), float(r[1]), float(r[2]), float(r[3])


def expected_bin_counts(
    model: ReflectionModel, cfg: DetectionConfig, traj: Trajectory
) -> np.ndarray:
    """Exact per-bin expected counts (n_bins, 4) from piecewise integration."""
    n_bins = traj.total_ticks // cfg.bin_ticks
    if n_bins < 1:
        raise ValueError("horizon shorter than one bin")
    rates = segment_rates(model, cfg, traj)
    return kernels.bin_expected_counts(
        traj.start_ticks, traj.dur_ticks, rates, cfg.bin_ticks, int(n_bins)
    )


def _bin_truth(model: ReflectionModel, cfg: DetectionConfig, traj: Trajectory, n_bins: int):
    aux = np.stack(
        [traj.detuning_uev, (traj.spin == int(SpinState.DOWN)).astype(np.float64)], axis=1
    )
    integ = kernels.bin_expected_counts(
        traj.start_ticks, traj.dur_ticks, aux, cfg.bin_ticks, int(n_bins)
    )
    mean_det = integ[:, 0] / cfg.bin_width_us
    down_frac = integ[:, 1] / cfg.bin_width_us
    spin = np.where(down_frac >= 0.5, int(SpinState.DOWN), int(SpinState.UP)).astype(np.int8)
    delta_eff = effective_detuning(model, mean_det, spin)
    r = reflection_amplitudes(model, delta_eff)
    phase = np.angle(r)
    phase[np.abs(r) < 1e-12] = np.nan  # critical coupling: phase undefined
    return mean_det, spin, phase


def sample_bins(
    model: ReflectionModel,
    cfg: DetectionConfig,
    traj: Trajectory,
    seed: RandomSeed,
    threads: int = 1,
    with_truth: bool = True,
) -> BinArray:
    """Draw the Poisson count stream for every bin in the horizon.

    Counts in block k come from the substream (stream_id, BINS, k), so the
    result does not depend on `threads`.
    """
    means = expected_bin_counts(model, cfg, traj)
    n_bins = means.shape[0]
    counts = np.empty((n_bins, 4), dtype=np.int64)
    n_blocks = (n_bins + _BLOCK_BINS - 1) // _BLOCK_BINS

    def fill(block: int) -> None:
        lo = block * _BLOCK_BINS
        hi = min(lo + _BLOCK_BINS, n_bins)
        rng = seed.generator(_STREAM_BINS, block)
        counts[lo:hi] = rng.poisson(means[lo:hi])

    if threads <= 1:
        for block in range(n_blocks):
            fill(block)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(n_blocks)))

    out = BinArray(counts=counts, bin_width_us=cfg.bin_width_us)
    if with_truth:
        det, spin, phase = _bin_truth(model, cfg, traj, n_bins)
        out.truth_detuning_uev = det
        out.truth_spin = spin
        out.truth_phase_rad = phase
    return out


def write_counts_csv(bins: BinArray, path, include_truth: bool = True) -> None:
    """Binned-counts interchange CSV (UTF-8, LF); truth columns optional."""
    truth = include_truth and bins.has_truth
    header = COUNTS_HEADER + (TRUTH_HEADER if truth else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        t_start = bins.t_start_us()
        for i in range(bins.n_bins):
            row = [i, f"{t_start[i]:.9g}"] + [int(c) for c in bins.counts[i]]
            if truth:
                row += [
                    f"{bins.truth_detuning_uev[i]:.9g}",
                    str(SpinState(int(bins.truth_spin[i]))),
                    f"{bins.truth_phase_rad[i]:.9g}",
                ]
            writer.writerow(row)


def read_counts_csv(path) -> BinArray:
    """Parse a binned-counts CSV, rejecting schema violations with row numbers."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        if header == COUNTS_HEADER:
            truth = False
        elif header == COUNTS_HEADER + TRUTH_HEADER:
            truth = True
        else:
            raise DataFormatError(f"{path}: unexpected header {header}")
        ncols = len(header)
        counts, t_starts = [], []
        dets, spins, phases = [], [], []
        first_idx = None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != ncols:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {ncols} columns, got {len(row)}"
                )
            try:
                idx = int(row[0])
                t_starts.append(float(row[1]))
                c = [int(x) for x in row[2:6]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if first_idx is None:
                first_idx = idx
            # contiguity keeps lag-based estimators valid on parsed streams
            expected_idx = first_idx + lineno - 2
            if idx != expected_idx:
                raise DataFormatError(
                    f"{path}:{lineno}: bin_index {idx} out of order (expected {expected_idx})"
                )
            if any(x < 0 for x in c):
                raise DataFormatError(f"{path}:{lineno}: negative counts {c}")
            counts.append(c)
            if truth:
                try:
                    dets.append(float(row[6]))
                    spins.append(int(SpinState.parse(row[7])))
                    phases.append(float(row[8]))
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    if not counts:
        raise DataFormatError(f"{path}: no data rows")
    if len(t_starts) >= 2:
        width = t_starts[1] - t_starts[0]
        steps = np.diff(np.asarray(t_starts))
        if width <= 0 or not np.allclose(steps, width, rtol=1e-9, atol=1e-9):
            raise DataFormatError(f"{path}: non-uniform bin spacing")
    else:
        raise DataFormatError(f"{path}: need at least two bins to infer bin width")
    out = BinArray(counts=np.asarray(counts, dtype=np.int64), bin_width_us=float(width))
    if truth:
        out.truth_detuning_uev = np.asarray(dets, dtype=np.float64)
        out.truth_spin = np.asarray(spins, dtype=np.int8)
        out.truth_phase_rad = np.asarray(phases, dtype=np.float64)
    return out
