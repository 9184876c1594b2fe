from typing import Optional


class RidgecastError(Exception):
    """Base class for all library errors."""


class ConfigError(RidgecastError, ValueError):
    """Invalid configuration, plan or metadata."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{location}")


class PanelValidationError(ConfigError):
    """Malformed panel CSV, reported with its row/column position."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        parts = []
        if row is not None:
            parts.append(f"row {row}")
        if column is not None:
            parts.append(f"column '{column}'")
        location = f" at {', '.join(parts)}" if parts else ""
        super().__init__(f"{message}{location}", key=column)
        self.row = row
        self.column = column


class DesignError(RidgecastError, ValueError):
    """A regression design cannot be built for the requested window."""

    def __init__(self, message: str, earliest_feasible_origin=None):
        self.earliest_feasible_origin = earliest_feasible_origin
        super().__init__(message)


class SamplerError(RidgecastError, FloatingPointError):
    """A Gibbs conditional produced non-finite values."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"{message}{where}")


class ScoringError(RidgecastError, ValueError):
    """Evaluation inputs are incomplete or out of range."""
