"""Shared exception types."""


class StlFleetError(Exception):
    """Base class for all library errors."""


class MisalignmentError(StlFleetError):
    """A time or period does not line up with the sampling grid."""


class OutOfRangeError(StlFleetError):
    """An interval or evaluation point lies outside the allowed range."""


class HorizonOverflowError(StlFleetError):
    """A time-shifted formula window extends past the end of the trace."""


class ScenarioError(StlFleetError):
    """A scenario document is malformed or violates mission invariants."""


class NumericalFailureError(StlFleetError):
    """The optimizer produced a non-finite objective value."""
