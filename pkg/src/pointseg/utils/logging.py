"""Logging utilities."""

import os
import sys
import json
import logging
from datetime import datetime, timezone
from typing import Optional

from ..models import PointSegError, LoggingConfig

ROOT_LOGGER = "pointseg"


class LoggingManager:
    """Logging manager for the engine."""

    def __init__(self, config: LoggingConfig):
        self.config = config
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """Set up the logging system."""
        logger = logging.getLogger(ROOT_LOGGER)

        # Set log level
        level_map = {
            "debug": logging.DEBUG,
            "info": logging.INFO,
            "warning": logging.WARNING,
            "error": logging.ERROR,
            "critical": logging.CRITICAL
        }
        logger.setLevel(level_map.get(self.config.level.lower(), logging.INFO))

        # Repeated setup (tests, several commands in one process) must not stack handlers
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()

        file_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        console_formatter = logging.Formatter('%(levelname)s: %(message)s')

        if self.config.log_file:
            log_dir = os.path.dirname(self.config.log_file)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.FileHandler(self.config.log_file)
            file_handler.setFormatter(file_formatter)
            logger.addHandler(file_handler)

        if self.config.console:
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(console_formatter)
            logger.addHandler(console_handler)

        return logger

    def log_error(self, error: PointSegError, command: Optional[str] = None):
        """Log an engine error with context."""
        error_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "command": command,
            **error.to_report(),
        }
        self.logger.error(f"Command error: {json.dumps(error_data, default=str)}")
