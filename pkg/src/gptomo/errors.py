"""Exception hierarchy.

Everything numerical derives from :class:`NumericalError` so the CLI can map
it to exit code 3 in one place.
"""


class NumericalError(Exception):
    """Base class for failures of the numerical pipeline."""


class SingularA3(NumericalError):
    """The output block A3 is not invertible (a2^2 - 4|c2|^2 <= tol)."""


class AllNegativeSpectrum(NumericalError):
    """Positive projection impossible: no positive eigenvalues."""


class NonNormalizable(NumericalError):
    """Output Q function is not integrable over the plane."""


class EmptyGrid(NumericalError):
    """The grid carries (numerically) no probability mass."""


class Divergent(NumericalError):
    """A complex Gaussian integral does not converge."""


class RejectionOverflow(NumericalError):
    """Too few samples land on the grid for rejection sampling."""


class NotIC(NumericalError):
    """The input design is not informationally complete."""


class AllZeroRow(NumericalError):
    """An input state produced no nonzero counts."""


class NoConvergence(NumericalError):
    """An iterative solver hit its iteration cap or t ladder."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConstraintBoundary(NumericalError):
    """Constrained estimate converged on the positivity boundary."""


class AllStartsSingular(NumericalError):
    """Every optimizer start landed on a non-IC design."""


class NotCP(NumericalError):
    """A generated process failed the complete-positivity check."""
