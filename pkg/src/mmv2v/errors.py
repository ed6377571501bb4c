"""Exception hierarchy. Each class maps to one CLI exit code."""


class MmV2VError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MmV2VError):
    """Config document could not be parsed or has unknown/missing keys."""

    exit_code = 2


class ValidationError(MmV2VError, ValueError):
    """A parameter violates its invariant. ``field`` names the offender."""

    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConvergenceError(MmV2VError):
    """An interference series did not meet its tolerance within k_max terms."""

    exit_code = 3


class NonMonotoneError(MmV2VError):
    """Received power is not monotone on a segment where inversion needs it."""

    exit_code = 3


class NoTransmitterError(MmV2VError):
    """Repeated drops produced no primary transmitter to tag."""

    exit_code = 3


class SchemaError(MmV2VError):
    """A CSV file does not match the schema the plot command expects."""

    exit_code = 2
