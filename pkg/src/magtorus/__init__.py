"""Magnetic Schroedinger operators on the flat two-torus: discretization,
eigensolvers, magnetic Weyl quantization and equidistribution diagnostics.
"""

from .errors import MagTorusError
from .field_gauge import build_field, build_gauge, build_potential
from .operator_grid import GridWavefunction, assemble
from .eigensolver import lowest_eigenpairs, window_eigenpairs
from .oracle_landau import landau_eigenfunction, landau_spectrum
from .lattice_control import certify_control
from .que_diagnostics import density_fourier, rate_fit

__version__ = "0.1.0"

__all__ = [
    "MagTorusError",
    "build_field",
    "build_gauge",
    "build_potential",
    "GridWavefunction",
    "assemble",
    "lowest_eigenpairs",
    "window_eigenpairs",
    "landau_eigenfunction",
    "landau_spectrum",
    "certify_control",
    "density_fourier",
    "rate_fit",
]
