"""Exception types shared across the package."""


class PMQKDError(Exception):
    """Base class for all package errors."""


class DomainError(PMQKDError, ValueError):
    """A parameter lies outside the domain of a formula."""


class TruncationError(PMQKDError):
    """The photon-number cutoff is too small for the requested state."""


class DimensionMismatch(PMQKDError, ValueError):
    """Subsystem layouts or dimensions are incompatible."""


class OddD(DomainError):
    """Sifting needs an even number of phase slices."""


class NotAttackRun(PMQKDError):
    """Attack statistics requested from a run without an adversary."""


class TooFewPoints(PMQKDError, ValueError):
    """A chart needs at least two points."""


class LayoutError(DimensionMismatch):
    """A state does not have the six-subsystem circuit layout."""
