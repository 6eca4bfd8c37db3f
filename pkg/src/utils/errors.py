"""
Exception hierarchy for the stream-function toolkit.

Every error that can end a CLI run carries the exit code it maps to, so the
command layer translates exceptions in one place.
"""

from typing import Dict, Type


class StreamFnError(Exception):
    """Base class for all toolkit errors."""
    exit_code: int = 1


class ConfigError(StreamFnError, ValueError):
    """Invalid or missing run configuration."""
    exit_code = 2


class PreconditionError(StreamFnError, ValueError):
    """Input violates the documented precondition of an operation."""
    exit_code = 2


class GridMismatchError(PreconditionError):
    """Fields combined in one operation live on different grids."""


class NonFiniteError(StreamFnError, ArithmeticError):
    """A computed quantity is NaN or infinite where a finite value is required."""
    exit_code = 3


class SolverError(StreamFnError, RuntimeError):
    """The linear solver failed to reach its tolerance within the iteration cap."""
    exit_code = 3


class DivergenceError(StreamFnError):
    """A refinement study found a ratio growing under mesh refinement."""
    exit_code = 4


class PoleGuardError(StreamFnError, ValueError):
    """Contour height too close to a pole of the resolvent."""
    exit_code = 5


class CoverageError(PreconditionError):
    """The log-variable grid does not cover the support of the data."""


EXIT_OK = 0

EXIT_CODES: Dict[Type[StreamFnError], int] = {
    ConfigError: ConfigError.exit_code,
    PreconditionError: PreconditionError.exit_code,
    SolverError: SolverError.exit_code,
    NonFiniteError: NonFiniteError.exit_code,
    DivergenceError: DivergenceError.exit_code,
    PoleGuardError: PoleGuardError.exit_code,
}


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract (unknown errors → 1)."""
    if isinstance(exc, StreamFnError):
        return exc.exit_code
    return 1
