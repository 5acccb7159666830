"""Exception hierarchy shared by the numerics modules and the CLI.

Each class carries the process exit code the CLI reports for it.
"""


class TorusZerosError(Exception):
    exit_code = 3


class DomainError(TorusZerosError, ValueError):
    """Invalid mathematical input (parameters, states, operators)."""
    exit_code = 2


class PreconditionError(TorusZerosError, ValueError):
    """An operation was called outside its admissible inputs."""
    exit_code = 3


class ZeroCountError(TorusZerosError, RuntimeError):
    """The root finder could not account for exactly d zeros in a cell."""


class InversionError(TorusZerosError, RuntimeError):
    """The zeros -> state linear system has no unique solution."""


class DegeneracyError(TorusZerosError, RuntimeError):
    """Two zeros coincide, so the derivative formula divides by zero."""


class StepRejectedError(TorusZerosError, RuntimeError):
    """A tracker step kept failing after repeated halving."""


class ClassificationError(TorusZerosError, RuntimeError):
    """Path endpoints could not be matched within tolerance."""


class InsufficientCoverageError(TorusZerosError, ValueError):
    """A path bundle does not span enough periods for the request."""
    exit_code = 4


class ConfigError(TorusZerosError, ValueError):
    """Malformed experiment or data file. The message names the field."""
    exit_code = 2

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
