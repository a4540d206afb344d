"""SEMF: model-agnostic prediction intervals from Monte Carlo expectation maximization."""

from .conformal import ConformalCalibrator, calibrate, conformalize
from .data import Dataset, Scaler, Split, load_csv, make_split, standardize
from .engine import SemfConfig, SemfModel, compute_weights, train
from .errors import ConfigError, DataError, NoAdmissibleConfig, NumericError, SemfError
from .harness import RunConfig, RunRecord, run_experiment, sweep
from .inference import IntervalBatch, predict_interval, predict_point
from .metrics import MetricReport, evaluate, select_best_config
from .simulation import SimSpec, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConformalCalibrator", "DataError", "Dataset", "IntervalBatch", "MetricReport",
    "NoAdmissibleConfig", "NumericError", "RunConfig", "RunRecord", "Scaler", "SemfConfig", "SemfError",
    "SemfModel", "SimSpec", "Split", "calibrate", "compute_weights", "conformalize", "evaluate", "generate",
    "load_csv", "make_split", "predict_interval", "predict_point", "run_experiment", "select_best_config",
    "standardize", "sweep", "train",
]
