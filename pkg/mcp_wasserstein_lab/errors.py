"""Exception hierarchy shared by every module of the lab."""

from pathlib import Path
from typing import Optional


class LabError(Exception):
    """Base class for all errors raised by the lab."""


class InvalidInputError(LabError, ValueError):
    """Input failed validation (shapes, ranges, weights)."""


class IngestionError(InvalidInputError):
    """A measure file could not be read or parsed."""

    def __init__(self, path: Path | str, message: str, row: Optional[int] = None):
        self.path = Path(path)
        self.row = row
        location = f"{self.path}" if row is None else f"{self.path}, row {row}"
        super().__init__(f"{location}: {message}")


class PreconditionError(InvalidInputError):
    """An operation was called outside its documented preconditions."""


class NumericError(LabError, ArithmeticError):
    """A numerical procedure failed (overflow, non-finite values, divergence)."""


class SinkhornConvergenceError(NumericError):
    """Potentials were requested from a Sinkhorn run that did not converge."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, iteration: int, message: str, checkpoints: Optional[list[Path]] = None):
        self.iteration = iteration
        self.checkpoints = checkpoints or []
        saved = f" (last finite state saved to {', '.join(map(str, self.checkpoints))})" if self.checkpoints else ""
        super().__init__(f"iteration {iteration}: {message}{saved}")
