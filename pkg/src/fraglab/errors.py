"""Exception hierarchy.

Validation problems (bad configs, malformed files) and numerical problems
(singular designs) are kept apart so the CLI can map them to distinct exit
codes.
"""

from __future__ import annotations


class FraglabError(Exception):
    """Base class for all package errors."""


class ConfigError(FraglabError, ValueError):
    """Invalid configuration or argument. ``field`` names the culprit if known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class ParseError(FraglabError, ValueError):
    """Malformed input file; ``row`` is the 1-based data row when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SingularDesignError(FraglabError, ArithmeticError):
    """Design (or Schur complement) is rank deficient to tolerance."""

    def __init__(self, message: str, condition_number: float = float("inf")):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3e})")


class STCViolation(FraglabError):
    """De-biasing was requested but the symmetric treatment condition fails."""
