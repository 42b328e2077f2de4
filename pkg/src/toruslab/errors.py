"""Exception types shared across the toruslab modules."""


class ToruslabError(Exception):
    """Base class for all toruslab errors."""


class MalformedSpec(ToruslabError):
    """Metric specification is syntactically or structurally invalid."""


class PositivityViolation(ToruslabError):
    """Conformal factor positivity certificate failed.

    Carries ``worst_lambda``, the smallest conformal factor found on a
    diagnostic sample grid.
    """

    def __init__(self, message, worst_lambda=None):
        super().__init__(message)
        self.worst_lambda = worst_lambda


class NotLiouville(ToruslabError):
    """Operation requires a Liouville (separable) metric."""


class ToleranceFailure(ToruslabError):
    """Adaptive integrator step size underflowed before reaching the horizon."""


class NotEscaping(ToruslabError):
    """Trajectory norm failed to grow; direction estimate unavailable.

    ``fiber_angle`` identifies the offending initial angle when the error is
    raised during fiber-map sampling.
    """

    def __init__(self, message, fiber_angle=None):
        super().__init__(message)
        self.fiber_angle = fiber_angle


class NoConvergence(ToruslabError):
    """Iterative minimization hit its iteration cap without converging."""


class BracketFailure(ToruslabError):
    """Target direction was not attained between sampled fiber angles.

    On a surjective fiber direction map this cannot happen; treat it as a
    loud diagnostic, not a routine error.
    """


class MonotonicityViolation(ToruslabError):
    """Sampled fiber direction map decreased beyond tolerance."""


class RationalTag(ToruslabError):
    """Operation requires an irrational rotation tag."""


class Unclassified(ToruslabError):
    """No asymptotic decay toward any candidate axis was detected."""


class BudgetExceeded(ToruslabError):
    """Requested entropy schedule exceeds the configured compute cap."""
