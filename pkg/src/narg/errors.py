"""Exception types shared across the package."""


class NargError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteError(NargError, ValueError):
    """Input contains NaN or Inf entries."""


class NonHermitianError(NargError, ValueError):
    """A matrix expected to be Hermitian is not, beyond tolerance."""


class InvalidCountError(NargError, ValueError):
    """Requested retention count is out of range."""


class InvalidGridError(NargError, ValueError):
    """Grid parameters are unusable."""


class DimensionMismatchError(NargError, ValueError):
    """Operands have inconsistent dimensions."""


class NonHermitianResultError(NargError, ValueError):
    """Assembled superblock is not Hermitian, e.g. a conjugate coupling is missing."""


class UnknownOperatorError(NargError, KeyError):
    """Operator name does not resolve inside the current block."""


class MissingOperatorError(NargError, KeyError):
    """A site references a renormalized operator the block does not carry."""


class TooLargeError(NargError, ValueError):
    """Problem size exceeds the documented limit of the routine."""


class MalformedHeaderError(NargError, ValueError):
    """FCIDUMP namelist header cannot be parsed."""


class MalformedLineError(NargError, ValueError):
    """FCIDUMP data line cannot be parsed; the message carries the line number."""


class InvalidSizeError(NargError, ValueError):
    """Fixture size parameter is out of range."""


class IncompleteLogError(NargError, ValueError):
    """Step log does not contain one usable record per scale."""


class DegenerateDenominatorError(NargError, ZeroDivisionError):
    """Mean-field and exact references coincide; correlation fraction undefined."""
