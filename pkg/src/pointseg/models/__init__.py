"""Data models package: scenes, predictions, configs and errors."""

from .errors import (
    ErrorCode,
    PointSegError,
    ConfigurationError,
    InputError,
    DataError,
    NumericalError,
    InternalError,
)
from .configs import (
    ModelConfig,
    LossConfig,
    ClusterConfig,
    TrainConfig,
    SynthConfig,
    EvalConfig,
    LoggingConfig,
)
from .scene import Scene, Violation, InstancePrediction, validate_scene, remap_instances, NO_INSTANCE

__all__ = [
    "ErrorCode", "PointSegError", "ConfigurationError", "InputError", "DataError",
    "NumericalError", "InternalError",
    "ModelConfig", "LossConfig", "ClusterConfig", "TrainConfig", "SynthConfig",
    "EvalConfig", "LoggingConfig",
    "Scene", "Violation", "InstancePrediction", "validate_scene", "remap_instances",
    "NO_INSTANCE",
]
