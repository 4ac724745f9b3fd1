"""Polarization optics of a spin-selective quantum-dot mirror.

The charged dot in the low-Q pillar acts, in the bad-cavity limit, as a
single-pole mirror for one circular polarization component.  Everything in
this module is a pure function of the model parameters: the complex
reflection amplitude versus laser-dot detuning, the Jones-vector transform
of the reflected light, linear-basis detector projections, and the analytic
phase quantities the count-based estimators are validated against.

Units: detunings and linewidths in ueV, phases in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

# Gaussian FWHM -> standard deviation
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class SpinState(IntEnum):
    DOWN = 0
    UP = 1

    @classmethod
    def parse(cls, text: str) -> "SpinState":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown spin state {text!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class ReflectionModel:
    """Emitter/cavity parameters defining the dipole mirror response.

    beta                fraction of emitter decay into the collected mode
    gamma_total_uev     total transition linewidth (FWHM), ueV
    background_fraction fraction b of collected photons that never interacted
                        (mode-mismatch background, V polarized)
    zeeman_split_uev    ground-state splitting; the spin-up transition sits
                        this far above the probed spin-down one
    uncoupled_loss      intensity loss of the uncoupled circular component
                        (higher-order-mode scatter, default 0)
    """

    beta: float = 0.65
    gamma_total_uev: float = 0.7
    background_fraction: float = 0.2
    zeeman_split_uev: float = 40.0
    uncoupled_loss: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not self.gamma_total_uev > 0.0:
            raise ValueError("gamma_total_uev must be > 0")
        if not 0.0 <= self.background_fraction < 1.0:
            raise ValueError("background_fraction must be in [0, 1)")
        if self.zeeman_split_uev < 0.0:
            raise ValueError("zeeman_split_uev must be >= 0")
        if not 0.0 <= self.uncoupled_loss < 1.0:
            raise ValueError("uncoupled_loss must be in [0, 1)")


@dataclass(frozen=True)
class JonesVector:
    """Field amplitudes in the circular {R, L} basis."""

    amp_r: complex
    amp_l: complex

    @property
    def norm_sq(self) -> float:
        return abs(self.amp_r) ** 2 + abs(self.amp_l) ** 2


@dataclass(frozen=True)
class DetectorIntensities:
    """Projections onto the linear V/H analyzer pair."""

    v: float
    h: float


# |V> = (|R> - i|L>)/sqrt(2), the input polarization
V_INPUT = JonesVector(amp_r=1.0 / math.sqrt(2.0), amp_l=-1j / math.sqrt(2.0))


@dataclass(frozen=True)
class CavitySpec:
    """Pillar-mode metadata; not used by the dynamics (bad-cavity limit)."""

    q_factor: float
    mode_energy_mev: float
    mode_fwhm_mev: float

    def validate(self, rel_tol: float = 0.05) -> None:
        derived = self.mode_energy_mev / self.mode_fwhm_mev
        if abs(derived - self.q_factor) > rel_tol * derived:
            raise ValueError(
                f"q_factor {self.q_factor} inconsistent with "
                f"mode_energy/mode_fwhm = {derived:.1f} (tolerance {rel_tol:.0%})"
            )


def reflection_amplitude(model: ReflectionModel, delta_uev: float) -> complex:
    """Complex reflection amplitude of the coupled circular component.

    r(delta) = 1 - 2*beta / (1 + 2i*delta/Gamma_tot).  On resonance this is
    the real number 1 - 2*beta, so the reflected phase is exactly pi for
    beta > 1/2 and 0 for beta < 1/2; far off resonance r -> 1.
    """
    return 1.0 - 2.0 * model.beta / (1.0 + 2j * delta_uev / model.gamma_total_uev)


def reflection_amplitudes(model: ReflectionModel, deltas_uev: np.ndarray) -> np.ndarray:
    """Vectorized reflection_amplitude."""
    d = np.asarray(deltas_uev, dtype=np.float64)
    return 1.0 - 2.0 * model.beta / (1.0 + 2j * d / model.gamma_total_uev)


def effective_detuning(model: ReflectionModel, delta_uev, spin) -> np.ndarray:
    """Detuning seen by the coupled (L) component for the given spin.

    The laser probes the spin-down transition; with the dot in the up state
    the interacting transition is displaced by the full Zeeman splitting.
    """
    d = np.asarray(delta_uev, dtype=np.float64)
    up = np.asarray(spin, dtype=np.int64) == int(SpinState.UP)
    return d + np.where(up, model.zeeman_split_uev, 0.0)


def reflect(
    model: ReflectionModel,
    state: JonesVector,
    delta_uev: float,
    spin: SpinState = SpinState.DOWN,
) -> JonesVector:
    """Reflect a Jones vector off the dot-pillar system.

    The L component picks up r(delta_eff); the uncoupled R component reflects
    with amplitude sqrt(1 - uncoupled_loss) (unity by default).
    """
    delta_eff = float(effective_detuning(model, delta_uev, int(spin)))
    r = reflection_amplitude(model, delta_eff)
    s = math.sqrt(1.0 - model.uncoupled_loss)
    return JonesVector(amp_r=state.amp_r * s, amp_l=state.amp_l * r)


def project_vh(state: JonesVector) -> DetectorIntensities:
    """Intensities behind the V and H analyzers.

    <V| = (<R| + i<L|)/sqrt(2) and <H| = (<R| - i<L|)/sqrt(2); together the
    two projectors resolve the full Jones-vector norm.
    """
    v_amp = (state.amp_r + 1j * state.amp_l) / math.sqrt(2.0)
    h_amp = (state.amp_r - 1j * state.amp_l) / math.sqrt(2.0)
    return DetectorIntensities(v=abs(v_amp) ** 2, h=abs(h_amp) ** 2)


def vh_projections(model: ReflectionModel, deltas_uev, spin) -> tuple[np.ndarray, np.ndarray]:
    """(v, h) analyzer intensities for unit V input, vectorized.

    For input |V> the projections reduce to v = |s + r|^2 / 4 and
    h = |s - r|^2 / 4 with s the uncoupled reflectance.
    """
    delta_eff = effective_detuning(model, deltas_uev, spin)
    r = reflection_amplitudes(model, delta_eff)
    s = math.sqrt(1.0 - model.uncoupled_loss)
    v = np.abs(s + r) ** 2 / 4.0
    h = np.abs(s - r) ** 2 / 4.0
    return v, h


def dilute_projections(v, h, background_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Mix in the V-polarized non-interacting background as intensity.

    Vbar = (1-b) v + b,  Hbar = (1-b) h.  The background does not interfere
    with the rotated signal.
    """
    b = background_fraction
    return (1.0 - b) * np.asarray(v) + b, (1.0 - b) * np.asarray(h)


def analytic_phase_lb(model: ReflectionModel, delta_uev, spin=int(SpinState.DOWN)) -> np.ndarray:
    """Linear-basis lower-bound phase arccos[(Vbar-Hbar)/(Vbar+Hbar)].

    This is the exact large-count limit of the count-based estimator,
    including the background dilution; it underestimates the true reflected
    phase whenever |r| < 1 (ellipticity) or b > 0.
    """
    v, h = vh_projections(model, delta_uev, spin)
    vbar, hbar = dilute_projections(v, h, model.background_fraction)
    ratio = np.clip((vbar - hbar) / (vbar + hbar), -1.0, 1.0)
    return np.arccos(ratio)


def exact_phase(model: ReflectionModel, delta_uev: float, spin: SpinState = SpinState.DOWN) -> float:
    """Model-side ground truth: arg r(delta), principal value in (-pi, pi].

    Raises ValueError at (near-)critical coupling where |r| vanishes and the
    phase is undefined.
    """
    delta_eff = float(effective_detuning(model, delta_uev, int(spin)))
    r = reflection_amplitude(model, delta_eff)
    if abs(r) < 1e-12:
        raise ValueError(
            f"reflection amplitude vanishes at delta={delta_uev} ueV (critical coupling); "
            "phase undefined"
        )
    return math.atan2(r.imag, r.real)


def resonance_dwell_fraction(inhomogeneous_fwhm_uev: float, window_halfwidth_uev: float) -> float:
    """Probability mass of the jitter Gaussian inside +/- window_halfwidth.

    Evaluates the error function for a zero-mean Gaussian with the given
    FWHM; this is the fraction of time a slowly jittering line spends within
    the window.
    """
    if not inhomogeneous_fwhm_uev > 0.0:
        raise ValueError("inhomogeneous_fwhm_uev must be > 0")
    if not window_halfwidth_uev > 0.0:
        raise ValueError("window_halfwidth_uev must be > 0")
    if math.isinf(window_halfwidth_uev):
        return 1.0
    sigma = inhomogeneous_fwhm_uev * FWHM_TO_SIGMA
    return math.erf(window_halfwidth_uev / (sigma * math.sqrt(2.0)))
