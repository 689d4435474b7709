"""Exception types shared across the package."""


class PlanwatchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PlanwatchError):
    """A configuration value violates an invariant.

    `field` names the offending configuration field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class PathTooShort(PlanwatchError):
    """A polyline does not cover the requested arc-length window."""


class NonMonotonicProjection(PlanwatchError):
    """Projected arc lengths of a trajectory double back along the reference."""


class ProfileMismatch(PlanwatchError):
    """Two lateral profiles cannot be compared (length or station mismatch)."""


class UnorderedInput(PlanwatchError):
    """A stream's timestamps are not strictly increasing."""


class AlignmentSkew(PlanwatchError):
    """Paired samples are further apart in time than the allowed tolerance."""


class ParseError(PlanwatchError):
    """A log or scenario file could not be parsed.

    `line` is the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CalibrationError(PlanwatchError):
    """Calibration input is unusable (e.g. contains no data)."""
