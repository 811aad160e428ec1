"""Exception hierarchy shared across the package."""


class DiffGmmError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(DiffGmmError):
    """A file or container is malformed (bad magic, truncated, bad header)."""


class UnsupportedError(DiffGmmError):
    """The file is well-formed but uses an encoding we do not handle."""


class ShapeError(DiffGmmError):
    """Array shapes do not agree with the operation's requirements."""


class ContractError(DiffGmmError):
    """A documented precondition was violated by the caller."""


class DegenerateDataError(DiffGmmError):
    """Input data cannot support the requested fit (e.g. constant signal)."""


class DataError(DiffGmmError):
    """A dataset is missing, empty, or otherwise unusable."""


class NumericError(DiffGmmError):
    """A NaN or Inf was detected where finite values are required."""
