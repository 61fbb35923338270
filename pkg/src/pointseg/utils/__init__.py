"""Utility modules package."""

from .config import ConfigManager
from .logging import LoggingManager

__all__ = ["ConfigManager", "LoggingManager"]
