"""Exception hierarchy shared by every fastedi module."""


class FastEdiError(ValueError):
    """Base class; CLI maps it to the data/validation exit code.

    ``line`` is the 1-based file line number when the error is line-addressable.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OrderingError(FastEdiError):
    """Event timestamps went backwards."""


class WindowError(FastEdiError):
    """An event or timestamp falls outside the exposure window."""


class StateError(FastEdiError):
    """Accumulator used in the wrong lifecycle state."""


class GeometryError(FastEdiError):
    """Image or coordinate does not match the sensor geometry."""


class RangeError(FastEdiError):
    """Requested timestamp lies before the reference time."""


class SignError(FastEdiError):
    """Bias currents would give thresholds of the wrong sign."""


class DomainError(FastEdiError):
    """Non-positive or non-finite physical parameter."""


class FormatError(FastEdiError):
    """Malformed file content."""


class ConfigError(FastEdiError):
    """Inconsistent dataset or run configuration (e.g. overlapping exposures)."""
