"""Exception types shared across the package.

Each class marks one failure contract so callers can distinguish a malformed
file from a shape mismatch or a misused flow direction.
"""


class RectiflowError(Exception):
    """Base class for all package errors."""


class ShapeError(RectiflowError, ValueError):
    """Array dimensions, channel counts, or sequence lengths disagree."""


class DirectionError(RectiflowError, ValueError):
    """A flow field with the wrong direction tag was passed to an operation."""


class DomainError(RectiflowError, ValueError):
    """Inputs leave the mathematical domain of an operation."""


class FormatError(RectiflowError, ValueError):
    """A binary or text payload does not match its declared format."""


class DataError(RectiflowError, ValueError):
    """Values are non-finite or otherwise violate a data invariant."""


class ContractError(RectiflowError, ValueError):
    """A documented call-site contract was violated."""


class ConfigError(RectiflowError, ValueError):
    """A pipeline configuration file is invalid."""
