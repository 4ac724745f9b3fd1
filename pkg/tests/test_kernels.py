"""Kernel backends: correctness against brute-force oracles and backend parity."""

import os
import subprocess
import sys

import numpy as np
import pytest

from qdphase.kernels import reference

accel = pytest.importorskip("qdphase.kernels.accel")

BACKENDS = [reference, accel]


def brute_force_bin_means(starts, durs, rates, bin_ticks, n_bins):
    """Quadratic-time oracle: explicit overlap of every (segment, bin) pair."""
    out = np.zeros((n_bins, rates.shape[1]))
    ends = starts + durs
    for b in range(n_bins):
        lo, hi = b * bin_ticks, (b + 1) * bin_ticks
        for s in range(starts.shape[0]):
            overlap = min(hi, ends[s]) - max(lo, starts[s])
            if overlap > 0:
                out[b] += rates[s] * (overlap * 0.1)
    return out


def random_partition(rng, total_ticks, n_seg):
    cuts = np.sort(rng.choice(np.arange(1, total_ticks), size=n_seg - 1, replace=False))
    starts = np.concatenate([[0], cuts]).astype(np.int64)
    durs = np.diff(np.concatenate([starts, [total_ticks]])).astype(np.int64)
    return starts, durs


@pytest.mark.parametrize("impl", BACKENDS, ids=["numpy", "numba"])
class TestBinExpectedCounts:
    def test_against_brute_force(self, impl):
        rng = np.random.default_rng(42)
        total, n_seg, bin_ticks = 10_000, 37, 400
        starts, durs = random_partition(rng, total, n_seg)
        rates = rng.uniform(0.0, 2.0, size=(n_seg, 4))
        n_bins = total // bin_ticks
        got = impl.bin_expected_counts(starts, durs, rates, bin_ticks, n_bins)
        want = brute_force_bin_means(starts, durs, rates, bin_ticks, n_bins)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_segment_boundary_mid_bin_exact(self, impl):
        # lam1*t1 + lam2*t2 with the boundary inside the only bin
        starts = np.array([0, 700], dtype=np.int64)
        durs = np.array([700, 300], dtype=np.int64)
        rates = np.array([[0.4], [1.2]])
        got = impl.bin_expected_counts(starts, durs, rates, 1000, 1)
        assert got[0, 0] == pytest.approx(0.4 * 70.0 + 1.2 * 30.0, rel=1e-14)

    def test_zero_rates(self, impl):
        starts = np.array([0], dtype=np.int64)
        durs = np.array([5000], dtype=np.int64)
        rates = np.zeros((1, 4))
        got = impl.bin_expected_counts(starts, durs, rates, 1000, 5)
        assert np.all(got == 0.0)

    def test_constant_rate_uniform_bins(self, impl):
        starts = np.array([0], dtype=np.int64)
        durs = np.array([100_000], dtype=np.int64)
        rates = np.array([[0.24]])
        got = impl.bin_expected_counts(starts, durs, rates, 1000, 100)
        np.testing.assert_allclose(got, 24.0, rtol=1e-12)


def test_bin_counts_backends_bit_identical():
    rng = np.random.default_rng(7)
    total, n_seg, bin_ticks = 1_000_000, 811, 1000
    starts, durs = random_partition(rng, total, n_seg)
    rates = rng.uniform(0.0, 1.5, size=(n_seg, 4))
    n_bins = total // bin_ticks
    a = reference.bin_expected_counts(starts, durs, rates, bin_ticks, n_bins)
    b = accel.bin_expected_counts(starts, durs, rates, bin_ticks, n_bins)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("impl", BACKENDS, ids=["numpy", "numba"])
class TestMergePartitions:
    def test_worked_example(self, impl):
        # jitter jump at 300, spin flips at 200 and 400, horizon 600 (in ticks)
        starts, durs, ia, ib = impl.merge_partitions(
            np.array([0, 300], dtype=np.int64),
            np.array([0, 200, 400], dtype=np.int64),
            600,
        )
        assert starts.tolist() == [0, 200, 300, 400]
        assert durs.tolist() == [200, 100, 100, 200]
        assert ia.tolist() == [0, 0, 1, 1]
        assert ib.tolist() == [0, 1, 1, 2]

    def test_single_segments(self, impl):
        starts, durs, ia, ib = impl.merge_partitions(
            np.array([0], dtype=np.int64), np.array([0], dtype=np.int64), 1000
        )
        assert starts.tolist() == [0] and durs.tolist() == [1000]

    def test_random_tiling_property(self, impl):
        rng = np.random.default_rng(3)
        for _ in range(20):
            total = int(rng.integers(100, 10_000))
            a, _ = random_partition(rng, total, int(rng.integers(1, 20)))
            b, _ = random_partition(rng, total, int(rng.integers(1, 20)))
            starts, durs, ia, ib = impl.merge_partitions(a, b, total)
            assert starts[0] == 0
            assert int(durs.sum()) == total
            assert np.all(durs > 0)
            # each merged segment maps to the source segment active at its start
            assert np.all(a[ia] <= starts)
            assert np.all(b[ib] <= starts)


def test_merge_backends_identical():
    rng = np.random.default_rng(11)
    a, _ = random_partition(rng, 50_000, 200)
    b, _ = random_partition(rng, 50_000, 333)
    ra = reference.merge_partitions(a, b, 50_000)
    rb = accel.merge_partitions(a, b, 50_000)
    for x, y in zip(ra, rb):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("impl", BACKENDS, ids=["numpy", "numba"])
class TestAutocorrelation:
    def test_small_case_oracle(self, impl):
        x = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        xc = x - x.mean()
        denom = float(np.sum(xc * xc))
        want = [1.0] + [float(np.sum(xc[:-k] * xc[k:])) / denom for k in (1, 2)]
        got = impl.autocorrelation(x, 2)
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_white_noise_uncorrelated(self, impl):
        rng = np.random.default_rng(5)
        x = rng.poisson(10.0, 40_000).astype(float)
        rho = impl.autocorrelation(x, 20)
        assert rho[0] == 1.0
        assert np.max(np.abs(rho[1:])) < 3.0 / np.sqrt(x.size)

    def test_zero_variance_raises(self, impl):
        with pytest.raises(ValueError, match="zero-variance"):
            impl.autocorrelation(np.full(100, 7.0), 5)


def test_autocorr_backends_agree():
    rng = np.random.default_rng(9)
    x = rng.normal(0, 1, 10_000)
    np.testing.assert_allclose(
        reference.autocorrelation(x, 50), accel.autocorrelation(x, 50), rtol=1e-10, atol=1e-12
    )


class TestBackendSelection:
    def _backend_from_env(self, value):
        env = dict(os.environ)
        if value is None:
            env.pop("QDPHASE_BACKEND", None)
        else:
            env["QDPHASE_BACKEND"] = value
        out = subprocess.run(
            [sys.executable, "-c", "import qdphase.kernels as k; print(k.BACKEND)"],
            capture_output=True, text=True, env=env, check=True,
        )
        return out.stdout.strip()

    def test_default_is_numba(self):
        assert self._backend_from_env(None) == "numba"

    def test_numpy_fallback_flag(self):
        assert self._backend_from_env("numpy") == "numpy"

    def test_bad_flag_rejected(self):
        env = dict(os.environ, QDPHASE_BACKEND="fortran")
        out = subprocess.run(
            [sys.executable, "-c", "import qdphase.kernels"],
            capture_output=True, text=True, env=env,
        )
        assert out.returncode != 0
        assert "QDPHASE_BACKEND" in out.stderr
