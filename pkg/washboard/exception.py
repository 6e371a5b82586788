"""Errors raised by the washboard library.

Library code raises; only the command line front end turns these into exit
codes and error records.
"""

from typing import Optional


class WashboardError(Exception):
    """Base class for every error raised by washboard"""


class DomainError(WashboardError):
    """An input lies outside the domain of the operation"""


class NonDifferentiableError(DomainError):
    """The potential has no derivative at the requested point"""


class AsymptoteInapplicableError(DomainError):
    """An asymptotic expansion was requested outside its hypotheses"""


class DriftUndefinedError(DomainError):
    """The Langevin drift -phi' cannot be evaluated for this potential"""


class UndefinedAtZeroForceError(DomainError):
    """The quantity divides by the steady flux, which vanishes at f = 0"""


class DynamicRangeError(WashboardError):
    """The exponents of an integrand span more than double precision allows"""


class QuadratureNotConvergedError(WashboardError):
    """Grid refinement stopped before reaching the requested tolerance"""

    def __init__(
        self, previous: float, last: float, resolution: int, rel_change: float
    ):
        super().__init__(
            f"quadrature not converged at n={resolution}: "
            f"last two values {previous!r}, {last!r} "
            f"(relative change {rel_change:.3e})"
        )
        self.previous = previous
        self.last = last
        self.resolution = resolution
        self.rel_change = rel_change


class InternalConsistencyError(WashboardError):
    """Two computations that must agree did not"""


class BlowUpError(WashboardError):
    """A time integration produced NaN or Inf"""

    def __init__(self, step_index: int, message: Optional[str] = None):
        super().__init__(
            message or f"non-finite state after step {step_index}"
        )
        self.step_index = step_index


class InsufficientHistoryError(WashboardError):
    """A slope fit was requested on too few samples"""


class UsageError(WashboardError):
    """The command line request is malformed"""
