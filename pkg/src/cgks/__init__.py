"""Compact gas-kinetic finite-volume solver for 2D compressible flow.

The package provides an unstructured-mesh solver built around a single
interface kernel: a kinetic flux function that evolves reconstructed
sub-cell data in time and returns both the time-integrated flux and the
updated interface value, which closes a compact third-order
reconstruction stencil.
"""

from .errors import CgksError, ConfigError, InvalidStateError, MeshError, NumericalError
from .gas import GasModel

__all__ = [
    "CgksError",
    "ConfigError",
    "GasModel",
    "InvalidStateError",
    "MeshError",
    "NumericalError",
]

__version__ = "0.1.0"
