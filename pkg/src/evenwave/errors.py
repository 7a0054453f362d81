"""Exception hierarchy shared by all modules."""


class EvenwaveError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EvenwaveError, ValueError):
    """Invalid construction parameters (dimension, grid size, radius, ...)."""


class DomainError(EvenwaveError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class GridMismatchError(EvenwaveError, ValueError):
    """Two objects that must share a radial grid do not."""


class NumericalError(EvenwaveError, ArithmeticError):
    """Non-finite values or failed numerical sanity checks."""


class ConvergenceError(NumericalError):
    """A quadrature or iteration failed its refinement gate."""


class NearSingularError(NumericalError):
    """A matrix that must be inverted is numerically singular.

    Attributes
    ----------
    smallest_singular_value : float
        Smallest singular value of the offending matrix.
    """

    def __init__(self, message, smallest_singular_value):
        super().__init__(message)
        self.smallest_singular_value = float(smallest_singular_value)


class AmbiguityError(EvenwaveError):
    """A classification cannot be decided at the requested tolerance.

    Attributes
    ----------
    candidates : list
        The eigenvalues that made the decision ambiguous.
    """

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = list(candidates)
