from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class ExosimError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(ExosimError):
    """Raised when the kernel or simulator is configured inconsistently."""


class TaskLookupError(ExosimError, KeyError):
    """Raised when a task id is not registered with the kernel."""


class TaskStateError(ExosimError):
    """Raised when a task is asked to make an illegal state transition."""


class PreconditionError(ExosimError, ValueError):
    """Raised when an operation is called outside its documented domain."""


class ConvergenceError(ExosimError, ArithmeticError):
    """Raised when the per-step drain-voltage root find does not converge."""

    def __init__(self, step: int, message: str = "") -> None:
        self.step = step
        super().__init__(message or f"drain voltage solve did not converge at step {step}")


@dataclass(frozen=True)
class ScenarioDiagnostic:
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.message} (line {self.line}, column {self.column})"

    def to_dict(self) -> dict:
        return {"line": self.line, "column": self.column, "message": self.message}


class ScenarioParseError(ExosimError):
    """Raised with every diagnostic collected while parsing a scenario."""

    def __init__(self, diagnostics: Sequence[ScenarioDiagnostic]) -> None:
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))
