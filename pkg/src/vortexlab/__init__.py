"""vortexlab: numerical laboratory for viscous vortex layers at low Mach number."""

from .params import PhysParams, lambda_from_data
from .grid import Grid, Field, Profile

__all__ = ["PhysParams", "lambda_from_data", "Grid", "Field", "Profile"]

__version__ = "0.1.0"
