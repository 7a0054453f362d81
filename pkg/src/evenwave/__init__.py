"""Numerical toolkit for wave operators of radial Schrodinger operators in even dimensions.

Submodules
----------
radial      grids, radial functions and reduced kernels
resolvent   free resolvent kernels and their low-energy expansion
threshold   Hamiltonians, eigen-data and generic/exceptional classification
inversion   ``1 + G0 V`` inversion, Feshbach splits and threshold fits
waveop      stationary and time-dependent wave operators
dispersive  propagation and ``L^p`` decay measurements
harmonic    one-dimensional reduction, Hilbert transform and weight probes
cli         batch experiment runner
"""

from .errors import (
    AmbiguityError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    EvenwaveError,
    GridMismatchError,
    NearSingularError,
    NumericalError,
)
from .radial import RadialFunction, RadialGrid, make_grid

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError",
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "EvenwaveError",
    "GridMismatchError",
    "NearSingularError",
    "NumericalError",
    "RadialFunction",
    "RadialGrid",
    "make_grid",
    "__version__",
]
