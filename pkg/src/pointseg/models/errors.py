"""Error models for the segmentation engine."""

from enum import Enum
from typing import Dict, Any, Optional


class ErrorCode(Enum):
    """Error codes mapped to process exit codes."""
    INTERNAL_ERROR = 1
    USAGE_ERROR = 2
    DATA_ERROR = 3
    NUMERICAL_ERROR = 4


class PointSegError(Exception):
    """Engine error with error code and details."""

    def __init__(
        self,
        code: ErrorCode,
        message: str,
        details: Optional[Dict[str, Any]] = None,
        path: Optional[str] = None
    ):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details or {}
        self.path = path

    def to_report(self) -> dict:
        """Convert error to report dictionary."""
        return {
            "error": self.code.value,
            "kind": self.code.name,
            "description": self.message,
            "details": self.details,
            "path": self.path
        }


class ConfigurationError(PointSegError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None, path: Optional[str] = None):
        super().__init__(ErrorCode.USAGE_ERROR, message, details, path)


class InputError(PointSegError):
    """Invalid argument handed to a pure function."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(ErrorCode.USAGE_ERROR, message, details)


class DataError(PointSegError):
    """Corrupt file or invalid scene content."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None, path: Optional[str] = None):
        super().__init__(ErrorCode.DATA_ERROR, message, details, path)


class NumericalError(PointSegError):
    """Non-finite values or a failed gradient check."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(ErrorCode.NUMERICAL_ERROR, message, details)


class InternalError(PointSegError):
    """Broken contract between engine components."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(ErrorCode.INTERNAL_ERROR, message, details)
