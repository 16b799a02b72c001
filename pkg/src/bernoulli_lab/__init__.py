"""bernoulli-lab: numerical laboratory for one-phase Bernoulli and
free boundary Allen-Cahn fields on Cartesian grids."""

from .errors import BernoulliLabError
from .field import Region, ScalarField, integrate_region, integrate_sphere
from .mesh import FreeBoundaryMesh, extract_free_boundary, extract_level_set, surface_integrate

__version__ = "0.1.0"
