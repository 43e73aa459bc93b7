"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class GridMismatchError(ValueError):
    """Two objects that must share a grid do not."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    ``residual`` holds the last measured residual (or marginal error).
    """

    def __init__(self, message, residual=float("nan"), **state):
        super().__init__(message)
        self.residual = residual
        self.state = state


class ScalingError(ConvergenceError):
    """The entropic scaling loop did not reach its marginal tolerance."""

    @property
    def marginal_error(self):
        return self.residual


class ProxError(ConvergenceError):
    """A pointwise proximal solve failed; ``cell`` is the offending index."""

    def __init__(self, message, cell, residual=float("nan"), **state):
        super().__init__(message, residual=residual, cell=cell, **state)
        self.cell = cell
