"""Exceptions shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its cap before reaching the requested tolerance.

    Carries the best value found and an estimate of the remaining gap so
    callers can decide whether the partial result is usable.
    """

    def __init__(self, message, best=None, bound_gap=None):
        super().__init__(message)
        self.best = best
        self.bound_gap = bound_gap


class ConvexityError(ValueError):
    """A sampled convexity check found a violated segment.

    ``witness`` is a tuple (xi, eta, violation) with
    violation = F(midpoint) - (F(xi)+F(eta))/2 > 0.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
