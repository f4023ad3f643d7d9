"""
core/errors.py
-------------------------------------------------
Error taxonomy shared by the library and the CLI.

Each error carries the process exit code the CLI
returns when it reaches the top level:
  2 - configuration error
  3 - data error
  4 - numeric abort (non-finite loss)
-------------------------------------------------
"""

from typing import Any, Dict, Optional


class GraphJigsawError(Exception):
    """Base class for every error the toolkit raises on purpose."""

    exit_code: int = 1


class ConfigError(GraphJigsawError, ValueError):
    """Invalid or unknown configuration key/value."""

    exit_code = 2


class DataError(GraphJigsawError):
    """Dataset missing, empty or unreadable."""

    exit_code = 3


class NumericAbort(GraphJigsawError):
    """
    Raised when a loss term becomes non-finite.

    Args:
        message: Human readable diagnostic
        record: Diagnostic fields (epoch, iteration, stage, loss values)
    """

    exit_code = 4

    def __init__(self, message: str, record: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.record: Dict[str, Any] = dict(record or {})
