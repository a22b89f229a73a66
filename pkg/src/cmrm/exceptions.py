"""Exception hierarchy shared across the package."""


class CmrmError(Exception):
    """Base class for all package errors."""


class ShapeError(CmrmError):
    """Array dimensions inconsistent with the declared model or batch."""


class LabelError(CmrmError):
    """A label is outside {0..K-1} or inconsistent with the task."""


class ConfigError(CmrmError):
    """Invalid configuration value or combination."""


class EmptySampleError(CmrmError):
    """An operation received an empty sample where at least one value is required."""


class ClassAbsentError(CmrmError):
    """A batch is missing one of the binary classes needed for class-conditional thresholds."""


class GroupError(CmrmError):
    """Group-conditional noise hit a singleton group."""


class SplitError(CmrmError):
    """Requested split fractions produce an empty partition."""


class FormatError(CmrmError):
    """Malformed CSV input (missing column, ragged row, bad cell)."""


class MetricError(CmrmError):
    """A metric's preconditions are not met (length mismatch, single class, ...)."""


class CalibrationError(CmrmError):
    """Conformal calibration received an empty score set."""


class NumericError(CmrmError):
    """Non-finite values where finite ones are required."""


class DegenerateSampleError(CmrmError):
    """A sample with zero spread where a density estimate is required."""
