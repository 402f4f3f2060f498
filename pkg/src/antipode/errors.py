"""Exception types raised by the engine."""


class AntipodeError(Exception):
    """Base class for all engine errors."""


class DomainError(AntipodeError, ValueError):
    """An argument lies outside the domain of an operation."""


class ParameterError(AntipodeError, ValueError):
    """A model parameter is invalid (negative deformation, bad resolution, ...)."""


class ConvergenceError(AntipodeError, RuntimeError):
    """An iterative solver failed to converge."""


class SingularOrbitError(AntipodeError, RuntimeError):
    """A geodesic hit a singular orbit with nonzero momentum in the collapsing angle."""


class StepSizeError(AntipodeError, RuntimeError):
    """Adaptive integration step size underflowed."""


class GridError(AntipodeError, RuntimeError):
    """Grid construction failed (too small, too large, disconnected)."""


class GraphError(AntipodeError, RuntimeError):
    """A sampled neighbourhood graph is unusable (for example disconnected)."""
