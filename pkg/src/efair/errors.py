"""Exception hierarchy shared by every e-fair module."""

from __future__ import annotations


class EFairError(Exception):
    """Base class for all errors raised by this package."""


class OutOfRangeError(EFairError, ValueError):
    """A quantity falls outside the domain of a price curve."""


class ConfigurationError(EFairError, ValueError):
    """Inconsistent or invalid configuration data."""


class InfeasibleError(EFairError):
    """An optimization phase has no feasible solution."""

    def __init__(self, message: str, constraint_class: str | None = None):
        super().__init__(message)
        self.constraint_class = constraint_class


class DemandExceedsSupplyError(InfeasibleError):
    """Total fair demand is larger than the cumulated seller supply."""


class LogisticsInfeasibleError(InfeasibleError):
    """No shipment/withdrawal plan satisfies the transshipment constraints."""


class SoldOut(EFairError):
    """Signal raised when a join would exceed the available supply."""


class ProtocolError(EFairError):
    """An event was delivered to a state machine that cannot accept it."""


class StepSizeError(EFairError, ValueError):
    """Numerical integration became unstable for the requested step."""


class FitError(EFairError, ValueError):
    """Samples cannot support a distribution fit."""


class ProblemSizeError(EFairError, ValueError):
    """A problem is too large for the requested (exhaustive) method."""


class SolverLimitError(EFairError):
    """The solver hit its node or time budget without a usable solution."""
