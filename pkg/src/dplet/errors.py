"""Exception hierarchy shared by every dplet module."""


class DPLETError(Exception):
    """Base class for all errors raised by dplet."""


class ShapeError(DPLETError, ValueError):
    """Operand extents are incompatible."""


class ParameterError(DPLETError, ValueError):
    """A numeric argument is outside its valid range."""


class ConfigurationError(DPLETError, ValueError):
    """A configuration is inconsistent or incomplete."""


class DataError(DPLETError, ValueError):
    """Input data is empty, non-finite or otherwise unusable."""


class ParseError(DataError):
    """A file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(DPLETError, ArithmeticError):
    """A forward operation produced NaN or Inf from finite inputs."""


class ConvergenceError(DPLETError, ArithmeticError):
    """An iterative routine exhausted its sweep budget."""


class ContractError(DPLETError, RuntimeError):
    """An API contract was violated (e.g. backward on a non-scalar)."""


class TrainingError(DPLETError, RuntimeError):
    """Training diverged or hit a non-finite gradient."""
