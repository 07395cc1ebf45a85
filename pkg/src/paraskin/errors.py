"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Brick/mortar layout cannot be realized on the requested domain."""


class ResolutionError(GeometryError):
    """Grid too coarse to resolve every lipid channel."""


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class SingularMatrixError(ArithmeticError):
    """Direct solve hit a (numerically) singular matrix."""


class StepFailure(RuntimeError):
    """A time step's linear solve did not converge.

    Attributes carry enough context to locate the failure: the simulated
    time of the failed step, the propagator label, and (when raised from
    the parareal driver) the iteration and subinterval indices.
    """

    def __init__(self, message, *, time=None, label=None, iteration=None, subinterval=None):
        super().__init__(message)
        self.time = time
        self.label = label
        self.iteration = iteration
        self.subinterval = subinterval


class ConfigError(ValueError):
    """Experiment configuration file is malformed or inconsistent."""
