"""Experiment configuration: flat key-value files, canonical hashing, manifests.

The config format is deliberately plain: one `section.key = value` per line,
`#` comments, fixed units per field (never unit suffixes in values).  A
canonical serialization (sorted keys) feeds the manifest hash, so equal
configs hash equally regardless of key order or comments.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .detection import DetectionConfig
from .errors import ConfigError
from .optics import CavitySpec, ReflectionModel
from .trajectories import JitterParams, RandomSeed, SpinParams

TOOLKIT_VERSION = "0.1.0"

_SPECIAL_FLOATS = {"inf": math.inf, "+inf": math.inf}


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one simulated experiment."""

    model: ReflectionModel = field(default_factory=ReflectionModel)
    jitter: JitterParams = field(default_factory=JitterParams)
    spin: SpinParams = field(default_factory=SpinParams)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    cavity: CavitySpec = field(default_factory=lambda: CavitySpec(339.0, 1388.0, 4.1))
    horizon_us: float = 1e7
    seed: RandomSeed = field(default_factory=lambda: RandomSeed(20260809, 0))

    def validate(self) -> None:
        if self.horizon_us < 100.0 * self.detection.bin_width_us:
            raise ConfigError(
                f"horizon_us ({self.horizon_us}) must be >= 100 x bin_width_us "
                f"({self.detection.bin_width_us})"
            )
        try:
            self.cavity.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def device_config() -> ExperimentConfig:
    """The shipped defaults: all headline parameters of the measured device."""
    return ExperimentConfig()


def _flatten(cfg: ExperimentConfig) -> dict[str, object]:
    d = cfg.detection
    items: dict[str, object] = {
        "model.beta": cfg.model.beta,
        "model.gamma_total_uev": cfg.model.gamma_total_uev,
        "model.background_fraction": cfg.model.background_fraction,
        "model.zeeman_split_uev": cfg.model.zeeman_split_uev,
        "model.uncoupled_loss": cfg.model.uncoupled_loss,
        "jitter.inhomogeneous_fwhm_uev": cfg.jitter.inhomogeneous_fwhm_uev,
        "jitter.jump_timescale_us": cfg.jitter.jump_timescale_us,
        "spin.t1_us": cfg.spin.t1_us,
        "spin.initial": cfg.spin.initial,
        "detection.total_detected_rate_per_us": d.total_detected_rate_per_us,
        "detection.splitter_ratio": d.splitter_ratio,
        "detection.dark_rate_per_us.apd1": d.dark_rate_per_us[0],
        "detection.dark_rate_per_us.apd2": d.dark_rate_per_us[1],
        "detection.dark_rate_per_us.apd3": d.dark_rate_per_us[2],
        "detection.dark_rate_per_us.apd4": d.dark_rate_per_us[3],
        "detection.herald_excess_rate_per_us": d.herald_excess_rate_per_us,
        "detection.bin_width_us": d.bin_width_us,
        "cavity.q_factor": cfg.cavity.q_factor,
        "cavity.mode_energy_mev": cfg.cavity.mode_energy_mev,
        "cavity.mode_fwhm_mev": cfg.cavity.mode_fwhm_mev,
        "run.horizon_us": cfg.horizon_us,
        "run.seed": cfg.seed.seed,
        "run.stream_id": cfg.seed.stream_id,
    }
    if d.measure_background_fraction is not None:
        items["detection.measure_background_fraction"] = d.measure_background_fraction
    return items


def _fmt(value: object) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def canonical_text(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(_flatten(cfg).items()))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()


def write_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(canonical_text(cfg), encoding="utf-8")


def _parse_float(raw: str, path, lineno: int) -> float:
    token = raw.strip().lower()
    if token in _SPECIAL_FLOATS:
        return _SPECIAL_FLOATS[token]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"{path}:{lineno}: {raw!r} is not a number (unit suffixes are rejected; "
            "units are fixed per field)"
        ) from None


def _parse_int(raw: str, path, lineno: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: {raw!r} is not an integer") from None


def parse_config(path) -> ExperimentConfig:
    """Parse a flat key-value config file on top of the device defaults."""
    entries: dict[str, tuple[str, int]] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip()
        if not key or not raw:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = (raw, lineno)

    base = device_config()
    known = set(_flatten(base)) | {"detection.measure_background_fraction"}
    for key, (_, lineno) in entries.items():
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")

    def get_float(key: str, default: float) -> float:
        if key in entries:
            raw, lineno = entries[key]
            return _parse_float(raw, path, lineno)
        return default

    def get_int(key: str, default: int) -> int:
        if key in entries:
            raw, lineno = entries[key]
            return _parse_int(raw, path, lineno)
        return default

    def get_str(key: str, default: str) -> str:
        if key in entries:
            return entries[key][0]
        return default

    try:
        model = ReflectionModel(
            beta=get_float("model.beta", base.model.beta),
            gamma_total_uev=get_float("model.gamma_total_uev", base.model.gamma_total_uev),
            background_fraction=get_float(
                "model.background_fraction", base.model.background_fraction
            ),
            zeeman_split_uev=get_float("model.zeeman_split_uev", base.model.zeeman_split_uev),
            uncoupled_loss=get_float("model.uncoupled_loss", base.model.uncoupled_loss),
        )
        jitter = JitterParams(
            inhomogeneous_fwhm_uev=get_float(
                "jitter.inhomogeneous_fwhm_uev", base.jitter.inhomogeneous_fwhm_uev
            ),
            jump_timescale_us=get_float(
                "jitter.jump_timescale_us", base.jitter.jump_timescale_us
            ),
        )
        spin = SpinParams(
            t1_us=get_float("spin.t1_us", base.spin.t1_us),
            initial=get_str("spin.initial", base.spin.initial),
        )
        mbf_key = "detection.measure_background_fraction"
        detection = DetectionConfig(
            total_detected_rate_per_us=get_float(
                "detection.total_detected_rate_per_us",
                base.detection.total_detected_rate_per_us,
            ),
            splitter_ratio=get_float("detection.splitter_ratio", base.detection.splitter_ratio),
            dark_rate_per_us=tuple(
                get_float(f"detection.dark_rate_per_us.apd{i+1}", base.detection.dark_rate_per_us[i])
                for i in range(4)
            ),
            herald_excess_rate_per_us=get_float(
                "detection.herald_excess_rate_per_us",
                base.detection.herald_excess_rate_per_us,
            ),
            bin_width_us=get_float("detection.bin_width_us", base.detection.bin_width_us),
            measure_background_fraction=(
                _parse_float(entries[mbf_key][0], path, entries[mbf_key][1])
                if mbf_key in entries
                else None
            ),
        )
        cavity = CavitySpec(
            q_factor=get_float("cavity.q_factor", base.cavity.q_factor),
            mode_energy_mev=get_float("cavity.mode_energy_mev", base.cavity.mode_energy_mev),
            mode_fwhm_mev=get_float("cavity.mode_fwhm_mev", base.cavity.mode_fwhm_mev),
        )
        seed = RandomSeed(
            seed=get_int("run.seed", base.seed.seed),
            stream_id=get_int("run.stream_id", base.seed.stream_id),
        )
        cfg = ExperimentConfig(
            model=model,
            jitter=jitter,
            spin=spin,
            detection=detection,
            cavity=cavity,
            horizon_us=get_float("run.horizon_us", base.horizon_us),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg.validate()
    return cfg


def with_overrides(
    cfg: ExperimentConfig,
    seed: int | None = None,
    stream_id: int | None = None,
    bin_width_us: float | None = None,
    horizon_us: float | None = None,
) -> ExperimentConfig:
    """Apply CLI-level overrides, revalidating the result."""
    out = cfg
    if seed is not None or stream_id is not None:
        out = replace(
            out,
            seed=RandomSeed(
                seed=cfg.seed.seed if seed is None else seed,
                stream_id=cfg.seed.stream_id if stream_id is None else stream_id,
            ),
        )
    if bin_width_us is not None:
        out = replace(out, detection=replace(out.detection, bin_width_us=bin_width_us))
    if horizon_us is not None:
        out = replace(out, horizon_us=horizon_us)
    out.validate()
    return out


@dataclass
class RunManifest:
    """Provenance record written next to every produced data file."""

    config_sha256: str
    toolkit_version: str
    seed: int
    stream_id: int
    outputs: list[str]
    wall_clock_s: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_sha256": self.config_sha256,
                "toolkit_version": self.toolkit_version,
                "seed": self.seed,
                "stream_id": self.stream_id,
                "outputs": self.outputs,
                "wall_clock_s": self.wall_clock_s,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


class ManifestTimer:
    """Context manager building a RunManifest around a run."""

    def __init__(self, cfg: ExperimentConfig, outputs: list[str]):
        self.cfg = cfg
        self.outputs = outputs
        self._t0 = 0.0
        self.manifest: RunManifest | None = None

    def __enter__(self) -> "ManifestTimer":
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.manifest = RunManifest(
                config_sha256=config_hash(self.cfg),
                toolkit_version=TOOLKIT_VERSION,
                seed=self.cfg.seed.seed,
                stream_id=self.cfg.seed.stream_id,
                outputs=sorted(self.outputs),
                wall_clock_s=round(time.perf_counter() - self._t0, 6),
            )


def write_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(manifest.to_json(), encoding="utf-8")


# keep dataclasses importable for callers that build configs programmatically
__all__ = [
    "ExperimentConfig",
    "ManifestTimer",
    "RunManifest",
    "TOOLKIT_VERSION",
    "canonical_text",
    "config_hash",
    "device_config",
    "parse_config",
    "with_overrides",
    "write_config",
    "write_manifest",
]
