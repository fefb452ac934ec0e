"""InterpreTabNet: a TabNet variant with sparse attentive masks, and the
InterpreStability measure of explanation stability."""
from .errors import (ConfigError, DataError, DegenerateImportanceError, InterpreTabNetError,
                     MetricUndefinedError, NumericError, SchemaError, ShapeError)
from .model import ArchConfig, ImportanceVector, InterpreTabNet, feature_importance
from .training import TrainConfig, finetune, pretrain
from .stability import StabilityConfig, interpre_stability, run_stability_experiment
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "ArchConfig", "ConfigError", "DataError", "DegenerateImportanceError", "ImportanceVector",
    "InterpreTabNet", "InterpreTabNetError", "MetricUndefinedError", "NumericError", "SchemaError",
    "ShapeError", "StabilityConfig", "TrainConfig", "feature_importance", "finetune",
    "interpre_stability", "load_checkpoint", "pretrain", "run_stability_experiment", "save_checkpoint",
]
