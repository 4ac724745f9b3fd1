"""Command-line front end: simulate, analyze, sweep, dwell.

Exit codes: 0 success, 2 config error, 3 data-format error, 4 estimator
failure (for example an empty herald selection).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, detection
from .config import (
    ExperimentConfig,
    ManifestTimer,
    TOOLKIT_VERSION,
    parse_config,
    device_config,
    with_overrides,
    write_manifest,
)
from .errors import EstimatorError, QdphaseError
from .optics import resonance_dwell_fraction
from .trajectories import _STREAM_DWELL_MC, generate_trajectory, write_trajectory_csv


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else device_config()
    return with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        stream_id=getattr(args, "stream_id", None),
        bin_width_us=getattr(args, "bin_width_us", None),
        horizon_us=getattr(args, "horizon_us", None),
    )


def _criteria(args) -> analysis.HeraldCriteria:
    mode = "double_channel" if args.mode == "double" else "single_channel"
    return analysis.HeraldCriteria(
        apd2_min_khz=args.apd2_min_khz, apd1_max_khz=args.apd1_max_khz, mode=mode
    )


def _simulate_bins(cfg: ExperimentConfig, threads: int, with_truth: bool) -> detection.BinArray:
    traj = generate_trajectory(cfg.jitter, cfg.spin, cfg.horizon_us, cfg.seed)
    return detection.sample_bins(
        cfg.model, cfg.detection, traj, cfg.seed, threads=threads, with_truth=with_truth
    )


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    outputs = [out.name]
    if args.dump_trajectory:
        outputs.append(Path(args.dump_trajectory).name)
    with ManifestTimer(cfg, outputs) as timer:
        traj = generate_trajectory(cfg.jitter, cfg.spin, cfg.horizon_us, cfg.seed)
        if args.dump_trajectory:
            write_trajectory_csv(traj, args.dump_trajectory)
        bins = detection.sample_bins(
            cfg.model, cfg.detection, traj, cfg.seed,
            threads=args.threads, with_truth=not args.no_truth,
        )
        detection.write_counts_csv(bins, out, include_truth=not args.no_truth)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    write_manifest(timer.manifest, manifest_path)
    print(
        f"simulate: wrote {bins.n_bins} bins to {out} "
        f"(manifest {manifest_path.name}, config {timer.manifest.config_sha256[:12]})"
    )
    return 0


def cmd_analyze(args) -> int:
    bins = detection.read_counts_csv(args.counts)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    crit = _criteria(args)

    fig2 = analysis.figure2_histogram(bins, bucket_khz=args.fig2_bucket_khz)
    analysis.write_fig2_csv(fig2, out_dir / "fig2_phase_vs_apd2_rate.csv")
    fig3 = analysis.figure3_histogram(
        bins, apd1_bucket_khz=args.fig3_apd1_bucket_khz, apd2_bucket_khz=args.fig3_apd2_bucket_khz
    )
    analysis.write_fig3_csv(fig3, out_dir / "fig3_phase_vs_herald_rates.csv")

    sel = analysis.herald_select(bins, crit)
    if not sel.any():
        raise EstimatorError("no heralded bins: herald criteria select nothing")
    est = analysis.pooled_phase(bins, sel)
    print(
        f"hot-spot: phi_lb = {est.phi_lb / math.pi:.4f} pi +/- {est.sigma_phi / math.pi:.4f} pi "
        f"(pooled V={est.n_v}, H={est.n_h}, bins={int(sel.sum())}, "
        f"herald apd1={est.herald_coords[0]:.0f} kHz, apd2={est.herald_coords[1]:.0f} kHz)"
    )
    try:
        frac = analysis.interacting_fraction(est.phi_lb)
        print(f"interacting fraction: {frac:.4f}")
    except EstimatorError:
        print("interacting fraction: n/a (phi_lb <= pi/2, full-shift model not applicable)")
    print(f"analyze: wrote figure CSVs to {out_dir}")
    return 0


def _parse_widths(raw: str) -> list[float]:
    try:
        widths = [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise EstimatorError(f"bad width list {raw!r}") from None
    if not widths:
        raise EstimatorError("empty width list")
    return widths


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    crit = _criteria(args)
    if args.estimator == "contrast":
        widths = _parse_widths(args.widths_us)
        traj = generate_trajectory(cfg.jitter, cfg.spin, cfg.horizon_us, cfg.seed)

        def make_bins(width_us: float) -> detection.BinArray:
            det = replace(cfg.detection, bin_width_us=width_us)
            return detection.sample_bins(
                cfg.model, det, traj, cfg.seed, threads=args.threads, with_truth=False
            )

        result = analysis.timescale_sweep(make_bins, widths, crit)
        analysis.write_sweep_csv(result, out)
        note = " (at fit bound: flat contrast)" if result.tau_at_bound else ""
        print(
            f"sweep: fitted tau = {result.fitted_tau_us:.1f} us{note}, "
            f"residual {result.fit_residual:.3g}, wrote {out}"
        )
    else:
        bins = _simulate_bins(cfg, args.threads, with_truth=False)
        lags_us, rho = analysis.rate_autocorrelation(bins, channel=1, max_lag=args.max_lag)
        tau, rms = analysis.fit_jitter_timescale(bins, channel=1, max_lag=args.max_lag)
        analysis.write_autocorr_csv(lags_us, rho, tau, rms, bins.n_bins, out)
        print(f"sweep (autocorr): fitted tau = {tau:.1f} us, residual {rms:.3g}, wrote {out}")
    return 0


def monte_carlo_dwell_fraction(
    cfg: ExperimentConfig, window_uev: float, n_dwells: int
) -> float:
    """Time-weighted fraction of jitter dwells inside +/- window_uev."""
    from .optics import FWHM_TO_SIGMA

    rng = cfg.seed.generator(_STREAM_DWELL_MC)
    dwells = rng.exponential(scale=cfg.jitter.jump_timescale_us, size=n_dwells)
    sigma = cfg.jitter.inhomogeneous_fwhm_uev * FWHM_TO_SIGMA
    detunings = rng.normal(0.0, sigma, n_dwells)
    inside = np.abs(detunings) <= window_uev
    return float(dwells[inside].sum() / dwells.sum())


def cmd_dwell(args) -> int:
    cfg = _load_config(args)
    window_uev = args.window_nev / 1000.0
    analytic = resonance_dwell_fraction(cfg.jitter.inhomogeneous_fwhm_uev, window_uev)
    mc = monte_carlo_dwell_fraction(cfg, window_uev, args.dwells)
    rel = abs(mc - analytic) / analytic if analytic > 0 else float("nan")
    print(f"dwell fraction (analytic, Gaussian): {analytic:.6g}")
    print(f"dwell fraction (Monte Carlo, {args.dwells} dwells): {mc:.6g}")
    print(f"relative difference: {rel:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdphase",
        description="Heralded phase-shift simulator and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"qdphase {TOOLKIT_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", help="config file (defaults to built-in device values)")
            p.add_argument("--seed", type=int, help="override run.seed")
            p.add_argument("--stream-id", type=int, dest="stream_id", help="override run.stream_id")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")

    def add_herald(p):
        p.add_argument("--apd2-min-khz", type=float, default=100.0, dest="apd2_min_khz")
        p.add_argument("--apd1-max-khz", type=float, default=400.0, dest="apd1_max_khz")
        p.add_argument("--mode", choices=["single", "double"], default="double")

    p_sim = sub.add_parser("simulate", help="generate a binned-counts CSV from a config")
    add_common(p_sim)
    p_sim.add_argument("--out", required=True, help="output counts CSV path")
    p_sim.add_argument("--bin-width-us", type=float, dest="bin_width_us")
    p_sim.add_argument("--horizon-us", type=float, dest="horizon_us")
    p_sim.add_argument("--no-truth", action="store_true", help="omit truth columns (lab format)")
    p_sim.add_argument(
        "--dump-trajectory", dest="dump_trajectory",
        help="also write the ground-truth trajectory CSV to this path",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="histograms + hot-spot estimate from a counts CSV")
    p_an.add_argument("--counts", required=True, help="input counts CSV")
    p_an.add_argument("--out-dir", required=True, dest="out_dir")
    add_herald(p_an)
    p_an.add_argument("--fig2-bucket-khz", type=float, default=10.0, dest="fig2_bucket_khz")
    p_an.add_argument("--fig3-apd1-bucket-khz", type=float, default=25.0, dest="fig3_apd1_bucket_khz")
    p_an.add_argument("--fig3-apd2-bucket-khz", type=float, default=10.0, dest="fig3_apd2_bucket_khz")
    p_an.set_defaults(func=cmd_analyze)

    p_sw = sub.add_parser("sweep", help="bin-width sweep or count autocorrelation")
    add_common(p_sw)
    p_sw.add_argument("--out", required=True, help="output sweep CSV")
    p_sw.add_argument(
        "--widths-us",
        default="25,50,100,200,400,800,1600,3200",
        dest="widths_us",
        help="comma-separated bin widths for the contrast sweep",
    )
    p_sw.add_argument("--bin-width-us", type=float, dest="bin_width_us")
    p_sw.add_argument("--horizon-us", type=float, dest="horizon_us")
    p_sw.add_argument(
        "--estimator", choices=["contrast", "autocorr"], default="contrast",
        help="contrast: herald-contrast knee vs width; autocorr: APD-2 autocorrelation",
    )
    p_sw.add_argument("--max-lag", type=int, default=60, dest="max_lag")
    add_herald(p_sw)
    p_sw.set_defaults(func=cmd_sweep)

    p_dw = sub.add_parser("dwell", help="analytic vs Monte Carlo resonance dwell fraction")
    add_common(p_dw)
    p_dw.add_argument("--window-nev", type=float, default=15.0, dest="window_nev")
    p_dw.add_argument("--dwells", type=int, default=10**6)
    p_dw.set_defaults(func=cmd_dwell)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QdphaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
