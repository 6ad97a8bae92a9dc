"""Exception hierarchy shared by all ultradiff modules."""


class UltradiffError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(UltradiffError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class BranchCutError(DomainError):
    """Evaluation requested on (or too close to) the negative-real branch cut."""


class ConvergenceError(UltradiffError, RuntimeError):
    """A quadrature or iteration failed to reach its tolerance.

    The achieved error estimate, when known, is stored in ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class TailTruncationError(ConvergenceError):
    """A truncated semi-infinite integral has a tail bound above tolerance."""


class ContourError(UltradiffError):
    """The integrand misbehaves on a Laplace-inversion contour.

    Raised on suspected singularities between adjacent contour nodes and on
    pole proximity (|p*K(p) - lambda| too small at a node).
    """


class PathDisagreementError(UltradiffError):
    """Two independent evaluation routes disagree beyond their combined error.

    Carries both values so the caller can inspect the discrepancy.
    """

    def __init__(self, message, first, second, tolerance):
        super().__init__(message)
        self.first = first
        self.second = second
        self.tolerance = tolerance


class GrowthRateError(UltradiffError):
    """Declared data growth is incompatible with the kernel's spatial decay."""


class PositivityError(UltradiffError):
    """A provably nonnegative quantity came out more negative than its error bar."""
