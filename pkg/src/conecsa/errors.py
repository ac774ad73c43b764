"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vector lengths do not match the problem dimension."""


class NoRootError(RuntimeError):
    """A bracketing root finder found no sign change.

    ``scan`` holds ``(sigma, residual)`` pairs sampled over the bracket so the
    caller can see where the residual actually lives.
    """

    def __init__(self, message, scan=()):
        super().__init__(message)
        self.scan = list(scan)


class NoRealRootError(ArithmeticError):
    """A closed-form steady-state expression has a negative discriminant."""


class SingularityError(ArithmeticError):
    """A denominator in a steady-state expression vanished."""


class StepError(ArithmeticError):
    """A mean-value iteration produced a non-finite component."""

    def __init__(self, message, component=None, generation=None):
        super().__init__(message)
        self.component = component
        self.generation = generation


class AxisDirectionError(ValueError):
    """The parent lies on the cone axis, so its r direction is undefined."""
