"""Config parsing, manifests, and the four CLI subcommands end to end."""

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from qdphase.cli import main
from qdphase.config import (
    canonical_text,
    config_hash,
    device_config,
    parse_config,
    write_config,
)
from qdphase.errors import ConfigError

REPO_CFG = Path(__file__).resolve().parents[1] / "configs" / "device.cfg"


class TestConfigParsing:
    def test_repo_config_equals_defaults(self):
        cfg = parse_config(REPO_CFG)
        assert cfg == device_config()

    def test_hash_stable_and_sensitive(self, tmp_path):
        cfg = device_config()
        h = config_hash(cfg)
        assert h == config_hash(parse_config(REPO_CFG))
        path = tmp_path / "alt.cfg"
        path.write_text("model.beta = 0.9\n")
        assert config_hash(parse_config(path)) != h

    def test_canonical_round_trip(self, tmp_path):
        cfg = device_config()
        path = tmp_path / "canon.cfg"
        write_config(cfg, path)
        assert parse_config(path) == cfg

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# a comment\n\nmodel.beta = 0.7  # trailing\n")
        assert parse_config(path).model.beta == 0.7

    def test_unknown_key_with_line_number(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("model.beta = 0.7\nmodel.bogus = 1\n")
        with pytest.raises(ConfigError, match=":2.*unknown key"):
            parse_config(path)

    def test_unit_suffix_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("model.gamma_total_uev = 0.7 ueV\n")
        with pytest.raises(ConfigError, match="unit suffixes"):
            parse_config(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("model.beta = 0.7\nmodel.beta = 0.8\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(path)

    def test_horizon_invariant(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("run.horizon_us = 5000.0\n")  # < 100 x 100 us bins
        with pytest.raises(ConfigError, match="horizon"):
            parse_config(path)

    def test_inf_values_supported(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("spin.t1_us = inf\njitter.jump_timescale_us = inf\n")
        cfg = parse_config(path)
        assert math.isinf(cfg.spin.t1_us)
        assert math.isinf(cfg.jitter.jump_timescale_us)

    def test_invalid_value_maps_to_config_error(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("model.beta = 1.4\n")
        with pytest.raises(ConfigError, match="beta"):
            parse_config(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config("/nonexistent/path.cfg")

    def test_canonical_text_sorted(self):
        text = canonical_text(device_config())
        keys = [line.split(" = ")[0] for line in text.splitlines()]
        assert keys == sorted(keys)


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text("run.horizon_us = 500000.0\nrun.seed = 321\n")
    return path


@pytest.fixture(scope="module")
def sim_counts(tmp_path_factory, small_cfg):
    out = tmp_path_factory.mktemp("sim") / "counts.csv"
    assert run_cli("simulate", "--config", str(small_cfg), "--out", str(out)) == 0
    return out


class TestSimulateCli:
    def test_writes_counts_and_manifest(self, sim_counts):
        assert sim_counts.exists()
        manifest_path = Path(str(sim_counts) + ".manifest.json")
        manifest = json.loads(manifest_path.read_text())
        assert manifest["toolkit_version"] == "0.1.0"
        assert manifest["seed"] == 321
        assert manifest["outputs"] == [sim_counts.name]
        assert manifest["config_sha256"]
        assert manifest["wall_clock_s"] >= 0

    def test_deterministic_across_runs_and_threads(self, tmp_path, small_cfg):
        outs = []
        for name, threads in (("a.csv", "1"), ("b.csv", "4"), ("c.csv", "8")):
            out = tmp_path / name
            assert run_cli(
                "simulate", "--config", str(small_cfg), "--out", str(out),
                "--threads", threads,
            ) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_manifests_identical_modulo_wall_clock(self, tmp_path, small_cfg):
        ms = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            run_cli("simulate", "--config", str(small_cfg), "--out", str(out))
            m = json.loads(Path(str(out) + ".manifest.json").read_text())
            m.pop("wall_clock_s")
            m["outputs"] = ["counts.csv"]  # normalize the differing filename
            ms.append(m)
        assert ms[0] == ms[1]

    def test_seed_override_changes_output(self, tmp_path, small_cfg):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("simulate", "--config", str(small_cfg), "--out", str(a))
        run_cli("simulate", "--config", str(small_cfg), "--out", str(b), "--seed", "999")
        assert a.read_bytes() != b.read_bytes()

    def test_no_truth_flag(self, tmp_path, small_cfg):
        out = tmp_path / "lab.csv"
        run_cli("simulate", "--config", str(small_cfg), "--out", str(out), "--no-truth")
        header = out.read_text().splitlines()[0]
        assert "truth" not in header

    def test_dump_trajectory(self, tmp_path, small_cfg):
        out = tmp_path / "counts.csv"
        dump = tmp_path / "traj.csv"
        assert run_cli(
            "simulate", "--config", str(small_cfg), "--out", str(out),
            "--dump-trajectory", str(dump),
        ) == 0
        from qdphase.trajectories import read_trajectory_csv

        traj = read_trajectory_csv(dump)
        assert traj.horizon_us == 500000.0
        manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
        assert "traj.csv" in manifest["outputs"]

    def test_bad_config_exit_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("model.beta = nope\n")
        assert run_cli("simulate", "--config", str(bad), "--out", str(tmp_path / "x.csv")) == 2


class TestAnalyzeCli:
    def test_analyze_outputs(self, sim_counts, tmp_path, capsys):
        out_dir = tmp_path / "figs"
        assert run_cli("analyze", "--counts", str(sim_counts), "--out-dir", str(out_dir)) == 0
        captured = capsys.readouterr().out
        assert "hot-spot: phi_lb" in captured
        assert "interacting fraction" in captured
        assert (out_dir / "fig2_phase_vs_apd2_rate.csv").exists()
        assert (out_dir / "fig3_phase_vs_herald_rates.csv").exists()

    def test_truth_blindness(self, sim_counts, tmp_path, capsys):
        # stripping truth columns must not change any estimate
        from qdphase.detection import read_counts_csv, write_counts_csv

        bins = read_counts_csv(sim_counts)
        lab = tmp_path / "lab.csv"
        write_counts_csv(bins, lab, include_truth=False)

        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        run_cli("analyze", "--counts", str(sim_counts), "--out-dir", str(dir_a))
        out_a = capsys.readouterr().out
        run_cli("analyze", "--counts", str(lab), "--out-dir", str(dir_b))
        out_b = capsys.readouterr().out
        assert out_a.splitlines()[0] == out_b.splitlines()[0]
        for name in ("fig2_phase_vs_apd2_rate.csv", "fig3_phase_vs_herald_rates.csv"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()

    def test_empty_selection_exit_4(self, sim_counts, tmp_path, capsys):
        code = run_cli(
            "analyze", "--counts", str(sim_counts), "--out-dir", str(tmp_path / "f"),
            "--apd2-min-khz", "100000",
        )
        assert code == 4
        assert "no heralded bins" in capsys.readouterr().err

    def test_malformed_csv_exit_3(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("bin_index,t_start_us,apd1,apd2,apd3,apd4\n0,0,1,2,3\n")
        assert run_cli("analyze", "--counts", str(bad), "--out-dir", str(tmp_path / "f")) == 3

    def test_single_mode_flag(self, sim_counts, tmp_path):
        assert run_cli(
            "analyze", "--counts", str(sim_counts), "--out-dir", str(tmp_path / "f"),
            "--mode", "single",
        ) == 0


class TestSweepCli:
    def test_contrast_sweep(self, tmp_path, capsys):
        cfg = tmp_path / "t1.cfg"
        cfg.write_text(
            "jitter.inhomogeneous_fwhm_uev = 0.0\njitter.jump_timescale_us = inf\n"
            "spin.t1_us = 250.0\nrun.horizon_us = 1000000.0\nrun.seed = 12\n"
        )
        out = tmp_path / "sweep.csv"
        code = run_cli(
            "sweep", "--config", str(cfg), "--out", str(out),
            "--widths-us", "25,50,100,200,400,800",
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "bin_width_us,contrast,contrast_err"
        assert lines[-1].startswith("fitted_tau_us,")
        assert "fitted tau" in capsys.readouterr().out

    def test_single_width_fit_failure_exit_4(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = run_cli(
            "sweep", "--out", str(out), "--widths-us", "100",
            "--horizon-us", "200000",
        )
        assert code == 4
        assert "4 bin widths" in capsys.readouterr().err

    def test_autocorr_mode(self, tmp_path, capsys):
        cfg = tmp_path / "jit.cfg"
        cfg.write_text(
            "spin.t1_us = inf\nspin.initial = down\nrun.horizon_us = 2000000.0\nrun.seed = 5\n"
        )
        out = tmp_path / "ac.csv"
        code = run_cli(
            "sweep", "--config", str(cfg), "--out", str(out), "--estimator", "autocorr",
            "--max-lag", "40",
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "lag_us,correlation,correlation_err"
        assert lines[-1].startswith("fitted_tau_us,")


class TestDwellCli:
    def test_report(self, capsys):
        assert run_cli("dwell", "--dwells", "200000") == 0
        out = capsys.readouterr().out
        assert "analytic" in out and "Monte Carlo" in out and "relative difference" in out

    def test_infinite_window(self, capsys):
        assert run_cli("dwell", "--window-nev", "inf", "--dwells", "10000") == 0
        out = capsys.readouterr().out
        assert "analytic, Gaussian): 1" in out


class TestFullRotationOracle:
    def test_ideal_configuration_pools_to_pi(self, tmp_path, capsys):
        # beta=1, no background, jitter off, spin pinned down: phi_lb -> pi
        cfg = tmp_path / "ideal.cfg"
        cfg.write_text(
            "model.beta = 1.0\nmodel.background_fraction = 0.0\n"
            "jitter.inhomogeneous_fwhm_uev = 0.0\njitter.jump_timescale_us = inf\n"
            "spin.t1_us = inf\nspin.initial = down\n"
            "detection.dark_rate_per_us.apd3 = 0.0\ndetection.dark_rate_per_us.apd4 = 0.0\n"
            "detection.herald_excess_rate_per_us = 0.0\n"
            "run.horizon_us = 1000000.0\nrun.seed = 1\n"
        )
        out = tmp_path / "counts.csv"
        assert run_cli("simulate", "--config", str(cfg), "--out", str(out)) == 0

        from qdphase.analysis import pooled_phase
        from qdphase.detection import read_counts_csv

        est = pooled_phase(read_counts_csv(out))
        assert abs(est.phi_lb - math.pi) <= 3 * est.sigma_phi


class TestBackendDeterminism:
    def test_counts_identical_across_backends(self, tmp_path, small_cfg):
        import os

        payloads = {}
        for backend in ("numba", "numpy"):
            out = tmp_path / f"{backend}.csv"
            env = dict(os.environ, QDPHASE_BACKEND=backend)
            res = subprocess.run(
                [sys.executable, "-m", "qdphase", "simulate", "--config", str(small_cfg),
                 "--out", str(out)],
                capture_output=True, text=True, env=env,
            )
            assert res.returncode == 0, res.stderr
            payloads[backend] = out.read_bytes()
        assert payloads["numba"] == payloads["numpy"]


class TestEntryPoints:
    def test_module_invocation(self):
        out = subprocess.run(
            [sys.executable, "-m", "qdphase", "--version"], capture_output=True, text=True
        )
        assert out.returncode == 0
        assert "qdphase 0.1.0" in out.stdout

    def test_console_script(self):
        out = subprocess.run(["qdphase", "--version"], capture_output=True, text=True)
        assert out.returncode == 0
