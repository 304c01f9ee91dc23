from __future__ import annotations

from typing import Any, Literal


class LightLTVError(Exception):
    """Base class for every error the library raises on purpose."""

    exit_code: int = 1
    details: dict[str, Any]

    def __init__(self, message: str, *, details: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            **self.details,
        }


class ConfigError(LightLTVError):
    """Raised when a configuration value, flag or config file is invalid."""

    exit_code: Literal[2] = 2  # pyright: ignore[reportIncompatibleVariableOverride]


class DataError(LightLTVError):
    """Raised when an input file cannot be parsed or violates a data invariant."""

    exit_code: Literal[3] = 3  # pyright: ignore[reportIncompatibleVariableOverride]
    row: int | None
    column: str | None

    def __init__(
        self,
        message: str,
        *,
        row: int | None = None,
        column: str | None = None,
        path: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        location = []
        if path is not None:
            location.append(str(path))
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        full_message = f"{', '.join(location)}: {message}" if location else message
        super().__init__(
            full_message,
            details={"row": row, "column": column, "path": path, **(details or {})},
        )
        self.row = row
        self.column = column
        self.path = path


class CheckpointError(DataError):
    """Raised for missing, truncated, corrupt or mismatched checkpoints."""


class ColdEntityError(DataError):
    """Raised when an entity lacks the history a formula needs."""


class NumericError(LightLTVError):
    """Raised when a loss or gradient stops being finite."""

    exit_code: Literal[4] = 4  # pyright: ignore[reportIncompatibleVariableOverride]

    def __init__(
        self,
        message: str,
        *,
        parameter: str | None = None,
        step: int | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message,
            details={"parameter": parameter, "step": step, **(details or {})},
        )
        self.parameter = parameter
        self.step = step
