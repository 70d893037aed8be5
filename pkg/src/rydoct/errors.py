"""Exception types shared across the package."""


class RydoctError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSpecError(RydoctError):
    """A basis, register, or problem specification violates its invariants."""


class GridExtentError(RydoctError):
    """The radial grid does not cover the spatial extent of a requested state."""


class ConvergenceError(RydoctError):
    """An iterative numerical search failed (bracketing or tolerance)."""


class ValidationError(RydoctError):
    """A data file failed validation; the message names the offending entry."""


class UnitError(RydoctError):
    """Unknown unit name or unsupported conversion pair."""


class ManifestError(RydoctError):
    """A run manifest is malformed; the message names the offending key."""
