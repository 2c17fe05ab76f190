"""Exception types shared across the package."""


class BoundViolation(AssertionError):
    """An inequality that must hold at a grid point does not."""


class ConditionError(ValueError):
    """A structural condition on a measure or drift function fails."""


class QuadratureError(RuntimeError):
    """Numerical integration did not converge."""


class StateSpaceOverflow(MemoryError):
    """Exact enumeration would exceed the configured state budget."""


class AmbiguousMaximizer(ValueError):
    """The variational function has more than one candidate maximizer."""
