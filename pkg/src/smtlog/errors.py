"""Exception hierarchy shared across the package."""


class SmtlogError(Exception):
    pass


class SortError(SmtlogError, TypeError):
    pass


class SortClash(SmtlogError):
    pass


class ProtocolError(SmtlogError):
    """The solver sent something we cannot interpret as a response."""

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class SolverError(SmtlogError):
    """Base class for failures of the solver process itself."""


class SpawnError(SolverError):
    pass


class HandshakeError(SolverError):
    pass


class SolverCrash(SolverError):
    pass


class UnsupportedFragment(SmtlogError):
    pass


class DatalogError(SmtlogError):
    def __init__(self, message, line=None, col=None):
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)
        self.line = line
        self.col = col


class DatalogSyntaxError(DatalogError):
    pass


class ArityError(DatalogError):
    pass


class UnknownRelation(DatalogError):
    pass


class RangeRestrictionError(DatalogError):
    pass


class ReservedNameError(DatalogError):
    pass


class EvalError(SmtlogError):
    pass


class BudgetExceeded(EvalError):
    pass


class SpecError(SmtlogError, ValueError):
    pass


class SoundnessError(SmtlogError):
    """Two evaluations that must agree did not."""


class SolverTimeout(SolverError):
    """A response did not arrive within the watchdog deadline."""
