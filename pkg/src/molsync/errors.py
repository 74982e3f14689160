"""Exception types raised across the package."""


class MolsyncError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MolsyncError, ValueError):
    """A parameter set violates a model or scheme constraint."""


class CirFormatError(MolsyncError, ValueError):
    """A CIR table could not be parsed; the message names the row."""


class EstimatorFailure(MolsyncError):
    """A synchronization step had no observations to work with."""


class CodingError(MolsyncError, ValueError):
    """Marker encode/decode received input it cannot handle."""


class AggregationError(MolsyncError, ValueError):
    """Statistics were requested over an empty set of blocks."""


class SweepError(MolsyncError):
    """Every point of a parameter sweep was infeasible."""
