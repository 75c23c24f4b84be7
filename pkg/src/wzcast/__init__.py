"""Work-zone-aware traffic speed forecasting for roadway corridors."""

from .errors import ConfigError, DataError, NumericError, WzcastError
from .features import (Calendar, FeatureBundle, ForecastSample, SpeedSeries,
                       SplitSamples, WorkZoneEvent, build_feature_bundle,
                       load_speed_csv, load_workzones_csv, windowize)
from .hypergraph import (ALL_NEIGHBORS, Hypergraph, RoadNetwork,
                         build_hypergraph, hypergraph_operator)
from .metrics import MetricReport, compute_metrics, disruption_accuracy
from .model import SPEED_WAVE_FORMULAS, ModelConfig, init_params
from .training import Datasets, TrainConfig, TrainHistory, prepare_datasets, train
from .evaluation import SplitEvaluation, evaluate_split, run_ablation
from .estimator import CorridorForecaster
from .synthetic import synthetic_corridor

__version__ = "0.1.0"

__all__ = [
    "ALL_NEIGHBORS", "Calendar", "ConfigError", "CorridorForecaster",
    "DataError", "Datasets", "FeatureBundle", "ForecastSample", "Hypergraph",
    "MetricReport", "ModelConfig", "NumericError", "RoadNetwork",
    "SPEED_WAVE_FORMULAS", "SpeedSeries", "SplitEvaluation", "SplitSamples",
    "TrainConfig", "TrainHistory", "WorkZoneEvent", "WzcastError",
    "build_feature_bundle", "build_hypergraph", "compute_metrics",
    "disruption_accuracy", "evaluate_split", "hypergraph_operator",
    "init_params", "load_speed_csv", "load_workzones_csv",
    "prepare_datasets", "run_ablation", "synthetic_corridor", "train",
    "windowize",
]
