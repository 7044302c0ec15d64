"""Exception hierarchy shared across the package."""


class DualStyleError(Exception):
    """Base class for all package errors."""


class ArgumentError(DualStyleError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(ArgumentError):
    """Array shapes are inconsistent with each other or with the operation."""


class RangeError(ArgumentError):
    """Values fall outside the range the operation requires."""


class NotFoundError(DualStyleError, FileNotFoundError):
    """A required file or directory does not exist."""


class DecodeError(DualStyleError):
    """Bytes could not be decoded as the expected format."""


class IoError(DualStyleError, OSError):
    """Reading or writing a file failed."""


class NumericError(DualStyleError, ArithmeticError):
    """A computation produced NaN or infinity where finite values are required."""


class ConfigError(DualStyleError):
    """A configuration object or file is invalid."""


class DatasetError(DualStyleError):
    """The training or evaluation dataset is unusable (e.g. empty)."""


class VersionError(DualStyleError):
    """A checkpoint was written by an incompatible format version."""
