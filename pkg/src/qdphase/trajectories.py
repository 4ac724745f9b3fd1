"""Ground-truth stochastic trajectories: spectral jitter and the spin telegraph.

Both processes are piecewise constant.  Spectral jitter is a renewal
process: the dot holds a detuning for an exponential dwell (mean
jump_timescale_us), then resamples it from a zero-mean Gaussian, so the
stationary detuning distribution is exactly that Gaussian and the
correlation time equals the mean dwell.  The spin is a symmetric two-state
telegraph with exponential dwells of mean t1_us in each state.

Time is quantized to 0.1 us ticks internally so that segment tilings are
exact in integer arithmetic; every dwell is rounded up to at least one tick.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .errors import DataFormatError
from .optics import FWHM_TO_SIGMA, SpinState

TICKS_PER_US = 10
TICK_US = 0.1

# substream tags under one (seed, stream_id) root
_STREAM_JITTER = 1
_STREAM_SPIN = 2
_STREAM_BINS = 3
_STREAM_DWELL_MC = 4

TRAJECTORY_HEADER = ["t_start_us", "duration_us", "detuning_ueV", "spin"]


@dataclass(frozen=True)
class RandomSeed:
    """Root seed plus a substream id; equal pairs reproduce runs exactly."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.stream_id < 0:
            raise ValueError("stream_id must be >= 0")

    def generator(self, *path: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *path))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class JitterParams:
    """Spectral-jitter parameters: stationary FWHM and mean dwell."""

    inhomogeneous_fwhm_uev: float = 5.0
    jump_timescale_us: float = 1500.0

    def __post_init__(self) -> None:
        if self.inhomogeneous_fwhm_uev < 0.0:
            raise ValueError("inhomogeneous_fwhm_uev must be >= 0")
        if not self.jump_timescale_us > 0.0:
            raise ValueError("jump_timescale_us must be > 0")


@dataclass(frozen=True)
class SpinParams:
    """Spin-telegraph parameters; initial state 'up', 'down' or 'random'."""

    t1_us: float = 250.0
    initial: str = "random"

    def __post_init__(self) -> None:
        if not self.t1_us > 0.0:
            raise ValueError("t1_us must be > 0")
        if self.initial not in ("up", "down", "random"):
            raise ValueError(f"initial must be up/down/random, got {self.initial!r}")


@dataclass(frozen=True)
class TrajectorySegment:
    t_start_us: float
    duration_us: float
    detuning_uev: float
    spin: SpinState


@dataclass
class Trajectory:
    """Merged piecewise-constant (detuning, spin) record tiling [0, horizon)."""

    start_ticks: np.ndarray
    dur_ticks: np.ndarray
    detuning_uev: np.ndarray
    spin: np.ndarray
    total_ticks: int

    @property
    def horizon_us(self) -> float:
        return self.total_ticks * TICK_US

    @property
    def n_segments(self) -> int:
        return int(self.start_ticks.shape[0])

    def segments(self) -> Iterator[TrajectorySegment]:
        for s, d, det, sp in zip(self.start_ticks, self.dur_ticks, self.detuning_uev, self.spin):
            yield TrajectorySegment(
                t_start_us=float(s) * TICK_US,
                duration_us=float(d) * TICK_US,
                detuning_uev=float(det),
                spin=SpinState(int(sp)),
            )

    def validate_tiling(self) -> None:
        if self.start_ticks[0] != 0:
            raise ValueError("trajectory must start at t=0")
        if np.any(self.dur_ticks <= 0):
            raise ValueError("segment durations must be positive")
        ends = self.start_ticks + self.dur_ticks
        if np.any(ends[:-1] != self.start_ticks[1:]) or ends[-1] != self.total_ticks:
            raise ValueError("segments must tile the horizon without gaps or overlaps")


def _ticks(t_us: float) -> int:
    ticks = int(round(t_us * TICKS_PER_US))
    if abs(ticks - t_us * TICKS_PER_US) > 1e-6:
        raise ValueError(f"{t_us} us is not representable on the 0.1 us tick grid")
    return ticks


def _renewal_dwells(rng: np.random.Generator, mean_us: float, total_ticks: int) -> np.ndarray:
    """Exponential dwell ticks covering total_ticks, last one truncated."""
    if math.isinf(mean_us):
        return np.array([total_ticks], dtype=np.int64)
    chunks = []
    covered = 0
    while covered < total_ticks:
        remaining = total_ticks - covered
        n = max(64, int(remaining / (mean_us * TICKS_PER_US) * 1.25) + 16)
        d = rng.exponential(scale=mean_us, size=n)
        t = np.maximum(1, np.ceil(d * TICKS_PER_US)).astype(np.int64)
        chunks.append(t)
        covered += int(t.sum())
    dwells = np.concatenate(chunks)
    cum = np.cumsum(dwells)
    last = int(np.searchsorted(cum, total_ticks, side="left"))
    dwells = dwells[: last + 1].copy()
    dwells[-1] -= int(cum[last]) - total_ticks
    return dwells


def generate_jitter(
    params: JitterParams, t_total_us: float, seed: RandomSeed
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(start_ticks, dur_ticks, detuning_uev) of the jitter renewal process."""
    if not t_total_us > 0.0:
        raise ValueError("t_total_us must be > 0")
    total = _ticks(t_total_us)
    rng = seed.generator(_STREAM_JITTER)
    dwells = _renewal_dwells(rng, params.jump_timescale_us, total)
    sigma = params.inhomogeneous_fwhm_uev * FWHM_TO_SIGMA
    detunings = rng.normal(loc=0.0, scale=sigma, size=dwells.shape[0])
    starts = np.concatenate([[0], np.cumsum(dwells)[:-1]]).astype(np.int64)
    return starts, dwells, detunings


def generate_spin(
    params: SpinParams, t_total_us: float, seed: RandomSeed
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(start_ticks, dur_ticks, spin_state) of the symmetric spin telegraph."""
    if not t_total_us > 0.0:
        raise ValueError("t_total_us must be > 0")
    total = _ticks(t_total_us)
    rng = seed.generator(_STREAM_SPIN)
    if params.initial == "random":
        first = int(rng.integers(0, 2))
    else:
        first = int(SpinState.parse(params.initial))
    dwells = _renewal_dwells(rng, params.t1_us, total)
    states = ((first + np.arange(dwells.shape[0])) % 2).astype(np.int8)
    starts = np.concatenate([[0], np.cumsum(dwells)[:-1]]).astype(np.int64)
    return starts, dwells, states


def merge_trajectories(
    jitter: tuple[np.ndarray, np.ndarray, np.ndarray],
    spin: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> Trajectory:
    """Refine the jitter and spin partitions into one (detuning, spin) tiling."""
    j_starts, j_durs, j_det = jitter
    s_starts, s_durs, s_state = spin
    j_total = int(j_starts[-1] + j_durs[-1])
    s_total = int(s_starts[-1] + s_durs[-1])
    if j_total != s_total:
        raise ValueError(f"mismatched horizons: jitter {j_total} vs spin {s_total} ticks")
    starts, durs, idx_j, idx_s = kernels.merge_partitions(j_starts, s_starts, j_total)
    traj = Trajectory(
        start_ticks=starts,
        dur_ticks=durs,
        detuning_uev=np.asarray(j_det, dtype=np.float64)[idx_j],
        spin=np.asarray(s_state, dtype=np.int8)[idx_s],
        total_ticks=j_total,
    )
    traj.validate_tiling()
    return traj


def generate_trajectory(
    jitter_params: JitterParams,
    spin_params: SpinParams,
    t_total_us: float,
    seed: RandomSeed,
) -> Trajectory:
    """Generate and merge both processes over [0, t_total_us)."""
    jit = generate_jitter(jitter_params, t_total_us, seed)
    spn = generate_spin(spin_params, t_total_us, seed)
    return merge_trajectories(jit, spn)


def time_weighted_detuning_std(traj: Trajectory) -> float:
    """Duration-weighted standard deviation of the detuning record."""
    w = traj.dur_ticks.astype(np.float64)
    mean = float(np.average(traj.detuning_uev, weights=w))
    var = float(np.average((traj.detuning_uev - mean) ** 2, weights=w))
    return math.sqrt(var)


def spin_occupancy(traj: Trajectory, state: SpinState = SpinState.DOWN) -> float:
    """Fraction of the horizon spent in the given spin state."""
    mask = traj.spin == int(state)
    return float(traj.dur_ticks[mask].sum() / traj.total_ticks)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for seg in traj.segments():
            writer.writerow(
                [
                    f"{seg.t_start_us:.1f}",
                    f"{seg.duration_us:.1f}",
                    f"{seg.detuning_uev:.9g}",
                    str(seg.spin),
                ]
            )


def read_trajectory_csv(path) -> Trajectory:
    starts, durs, dets, spins = [], [], [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise DataFormatError(f"{path}: unexpected trajectory header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                starts.append(_ticks(float(row[0])))
                durs.append(_ticks(float(row[1])))
                dets.append(float(row[2]))
                spins.append(int(SpinState.parse(row[3])))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    if not starts:
        raise DataFormatError(f"{path}: empty trajectory file")
    traj = Trajectory(
        start_ticks=np.asarray(starts, dtype=np.int64),
        dur_ticks=np.asarray(durs, dtype=np.int64),
        detuning_uev=np.asarray(dets, dtype=np.float64),
        spin=np.asarray(spins, dtype=np.int8),
        total_ticks=starts[-1] + durs[-1],
    )
    traj.validate_tiling()
    return traj
