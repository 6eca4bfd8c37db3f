from .errors import StreamFnError, ConfigError, PreconditionError, GridMismatchError, NonFiniteError, SolverError, DivergenceError, PoleGuardError, CoverageError, exit_code_for
from .logging_setup import configure_logging
