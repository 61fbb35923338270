"""Configuration manager."""

import copy
import logging
import os
from typing import Any, Dict, Optional, Type

import yaml
from pydantic import BaseModel, ValidationError

from ..models import (
    ConfigurationError,
    ModelConfig,
    LossConfig,
    ClusterConfig,
    TrainConfig,
    SynthConfig,
    EvalConfig,
    LoggingConfig,
)

logger = logging.getLogger(__name__)


SECTIONS: Dict[str, Type[BaseModel]] = {
    "model": ModelConfig,
    "loss": LossConfig,
    "cluster": ClusterConfig,
    "training": TrainConfig,
    "synth": SynthConfig,
    "evaluation": EvalConfig,
    "logging": LoggingConfig,
}


class ConfigManager:
    """Configuration manager backed by a YAML file with one section per config type."""

    def __init__(self, config_path: Optional[str] = "./config.yaml"):
        self.config_path = config_path
        self.config = self._load_config()

    def _load_config(self) -> dict:
        """Load the configuration from the YAML file."""
        if not self.config_path:
            return {}
        if not os.path.exists(self.config_path):
            logger.warning(f"Configuration file {self.config_path} not found. Using default settings.")
            return {}
        try:
            with open(self.config_path, "r") as file:
                config = yaml.safe_load(file) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigurationError(
                f"Failed to load configuration file: {e}", path=self.config_path
            )
        if not isinstance(config, dict):
            raise ConfigurationError("Configuration root must be a mapping", path=self.config_path)
        unknown = sorted(set(config) - set(SECTIONS))
        if unknown:
            raise ConfigurationError(
                f"Unknown configuration sections: {', '.join(unknown)}", path=self.config_path
            )
        return config

    def override(self, section: str, **values: Any) -> "ConfigManager":
        """Apply command-line overrides; ``None`` values leave the file value in place."""
        if section not in SECTIONS:
            raise ConfigurationError(f"Unknown configuration section: {section}")
        updates = {k: v for k, v in values.items() if v is not None}
        if updates:
            merged = dict(self.config.get(section) or {})
            merged.update(updates)
            self.config = copy.deepcopy(self.config)
            self.config[section] = merged
        return self

    def section(self, name: str) -> BaseModel:
        """Build and validate the config model for one section."""
        model_cls = SECTIONS[name]
        raw = self.config.get(name) or {}
        try:
            return model_cls(**raw)
        except ValidationError as e:
            problems = {".".join(str(p) for p in err["loc"]) or name: err["msg"] for err in e.errors()}
            raise ConfigurationError(
                f"Invalid '{name}' configuration", details=problems, path=self.config_path
            )
        except TypeError as e:
            raise ConfigurationError(f"Invalid '{name}' configuration: {e}", path=self.config_path)

    @property
    def model_config(self) -> ModelConfig:
        """Get network configuration."""
        return self.section("model")

    @property
    def loss_config(self) -> LossConfig:
        """Get loss configuration."""
        return self.section("loss")

    @property
    def cluster_config(self) -> ClusterConfig:
        """Get mean-shift configuration."""
        return self.section("cluster")

    @property
    def train_config(self) -> TrainConfig:
        """Get training configuration."""
        return self.section("training")

    @property
    def synth_config(self) -> SynthConfig:
        """Get synthetic data configuration."""
        return self.section("synth")

    @property
    def eval_config(self) -> EvalConfig:
        """Get evaluation configuration."""
        return self.section("evaluation")

    @property
    def logging_config(self) -> LoggingConfig:
        """Get logging configuration."""
        return self.section("logging")
