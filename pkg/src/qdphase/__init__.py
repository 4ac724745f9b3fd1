"""qdphase: heralded photon phase-shift simulation and analysis toolkit.

Generates stochastic photon-count streams from a parameterized model of a
charged quantum dot in a low-Q micropillar and recovers the phase shift,
spin lifetime and spectral-jitter timescale with count-based estimators,
each validated against the simulator's exact ground truth.
"""

from .analysis import (
    Fig2Histogram,
    Fig3Histogram,
    HeraldCriteria,
    PhaseEstimate,
    SweepResult,
    figure2_histogram,
    figure3_histogram,
    herald_select,
    interacting_fraction,
    phase_lb,
    pooled_phase,
    rate_autocorrelation,
    timescale_sweep,
)
from .config import ExperimentConfig, RunManifest, device_config, parse_config
from .detection import BinArray, BinRecord, DetectionConfig, instantaneous_rates, sample_bins
from .errors import ConfigError, DataFormatError, EstimatorError, QdphaseError
from .optics import (
    CavitySpec,
    DetectorIntensities,
    JonesVector,
    ReflectionModel,
    SpinState,
    analytic_phase_lb,
    exact_phase,
    project_vh,
    reflect,
    reflection_amplitude,
    resonance_dwell_fraction,
)
from .trajectories import (
    JitterParams,
    RandomSeed,
    SpinParams,
    Trajectory,
    TrajectorySegment,
    generate_jitter,
    generate_spin,
    generate_trajectory,
    merge_trajectories,
)

__version__ = "0.1.0"
