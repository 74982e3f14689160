"""Symbol synchronization for diffusive molecular links with random symbol durations."""

from .channel import ChannelParams, Cir, build_transparent_cir, load_cir_table, save_cir_table
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    optimize_threshold,
    run_coded_experiment,
    run_experiment,
    sweep,
)
from .receiver import ReceiverModel, Scheme, SchemeParams
from .timeline import Framework, TimelineConfig

__all__ = [
    "ChannelParams",
    "Cir",
    "ExperimentConfig",
    "ExperimentResult",
    "Framework",
    "ReceiverModel",
    "Scheme",
    "SchemeParams",
    "TimelineConfig",
    "build_transparent_cir",
    "load_cir_table",
    "optimize_threshold",
    "run_coded_experiment",
    "run_experiment",
    "save_cir_table",
    "sweep",
]

__version__ = "0.1.0"
