"""Exception hierarchy shared by every railfd module."""


class RailFDError(Exception):
    """Base class; the CLI reports these as one JSON line on stderr."""


class DimensionError(RailFDError, ValueError):
    """Array shapes or lengths do not match what an operation expects."""


class NumericError(RailFDError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class StateError(RailFDError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class DataError(RailFDError, ValueError):
    """Input data violates a domain invariant (missing segment, bad mean, ...)."""


class ConfigError(RailFDError, ValueError):
    """Configuration is invalid or inconsistent."""


class OrderingError(RailFDError, ValueError):
    """A time series is not sorted by timestamp."""


class FormatError(RailFDError, ValueError):
    """A persisted file has the wrong magic, version or layout."""


class MetricError(RailFDError, ValueError):
    """A metric is undefined for the given inputs."""


class StageError(RailFDError):
    """A pipeline stage failed; carries the stage name and the original cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
