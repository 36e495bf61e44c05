"""Exception types shared across the package."""


class EmptySubdomainError(ValueError):
    """A region specification selected no elements."""


class EvaluationError(ValueError):
    """Boundary data could not be evaluated where it was required."""


class GradientDomainError(ValueError):
    """Exact gradient requested at a point where the formula is not differentiable."""


class DegenerateMeasureError(ValueError):
    """All gradients vanish on the region, so the density is undefined."""


class DegenerateProbeError(ValueError):
    """The region has no interior vertices to perturb."""


class SingularSystemError(RuntimeError):
    """The inner linear solve broke down."""


class NewtonDivergenceError(RuntimeError):
    """Newton stagnated (damping floor hit or iteration budget exhausted).

    Carries the last iterate and the partial solve report so callers can
    inspect how far the continuation got.
    """

    def __init__(self, message, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class InvariantViolationError(RuntimeError):
    """A quantity that is exact at the discrete level was violated.

    This signals an implementation bug, not a modelling limitation.
    """
