"""Monte-Carlo simulator of a spectrally multiplexed heralded single-photon source."""
from .config import ExperimentConfig, load_config, load_preset
from .detection import ClickStream, CoincidenceHistogram, DetectorConfig, MetricsReport
from .experiments import RunResult, run_experiment
from .feedforward import FeedForwardConfig, ShiftOutcome
from .hom import DipCurve, HomConfig
from .simulator import Arrangement, SystemModel, build_plan, estimate_moments, simulate
from .source import PairBatch, SourceConfig
from .spectral import FilterBank, JsiGrid, SpectralMode

__all__ = [
    "Arrangement",
    "ClickStream",
    "CoincidenceHistogram",
    "DetectorConfig",
    "DipCurve",
    "ExperimentConfig",
    "FeedForwardConfig",
    "FilterBank",
    "HomConfig",
    "JsiGrid",
    "MetricsReport",
    "PairBatch",
    "RunResult",
    "ShiftOutcome",
    "SourceConfig",
    "SpectralMode",
    "SystemModel",
    "build_plan",
    "estimate_moments",
    "load_config",
    "load_preset",
    "run_experiment",
    "simulate",
]

__version__ = "0.1.0"
