"""
dpl/core/errors.py

Exception hierarchy shared by the library and the CLI.
Each class carries the process exit code the CLI maps it to.
"""
from typing import Optional


class DplError(Exception):
    """Base error for the package."""

    exit_code = 1


class ConfigError(DplError, ValueError):
    """Invalid configuration, arguments or preconditions."""

    exit_code = 1


class FormatError(DplError):
    """Malformed or unreadable file."""

    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None,
                 row: Optional[int] = None):
        self.path = path
        self.row = row
        location = ""
        if path is not None:
            location = f"{path}: "
        if row is not None:
            location += f"row {row}: "
        super().__init__(f"{location}{message}")


class DataFormatError(FormatError):
    """Dataset file (CSV / DPLF binary / sidecar) could not be parsed."""


class CheckpointError(FormatError):
    """Checkpoint schema or shape mismatch."""


class NumericError(DplError, ArithmeticError):
    """Non-finite values or other numeric failure."""

    exit_code = 3


class DimensionError(NumericError):
    """Operands with incompatible dimensions."""


class DegenerateInputError(NumericError):
    """Input for which the operation is undefined (e.g. a zero vector)."""


class ClassIndexError(DplError, IndexError):
    """Class index outside [0, num_classes)."""

    exit_code = 3


class TrainingAborted(NumericError):
    """
    Training stopped on a non-finite loss or gradient.

    Attributes:
        step: Step at which training stopped
        last_model: Model state before the failing step (may be None)
    """

    def __init__(self, message: str, step: int, last_model=None):
        super().__init__(message)
        self.step = step
        self.last_model = last_model
