"""Exception hierarchy shared across the package.

Errors deriving from :class:`PreconditionError` signal that a caller-supplied
object violates a hypothesis (bad input file, non-Hermitian coefficient,
negative eigenvalue, ...). The command line maps them to exit code 2.
"""

from __future__ import annotations


class HamoscError(Exception):
    """Base class for all package errors."""

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class PreconditionError(HamoscError):
    """An input violates a documented precondition."""


class PreconditionFailed(PreconditionError):
    """A criterion's hypothesis does not hold on the requested span."""


class OutOfDomain(PreconditionError):
    """A path was queried outside the span it is defined on."""


class NotPositiveSemidefinite(PreconditionError):
    """A matrix expected to be nonnegative definite has a negative eigenvalue."""


class NegativeEigenvalue(NotPositiveSemidefinite):
    """An eigenvalue branch of B(t) dropped below the tolerance band."""


class GridTooCoarse(PreconditionError):
    """Eigenvector tracking jumped by more than the allowed defect."""


class UnsolvableEq12(PreconditionError):
    """The linear matrix equation for F has no solution at some sample."""


class HypothesisViolated(PreconditionError):
    """A hypothesis of the Riccati comparison theorem fails."""


class StepSizeUnderflow(HamoscError):
    """The adaptive integrator could not make progress (likely stiffness)."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["t"] = self.t
        return d
