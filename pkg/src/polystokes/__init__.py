"""Polytopal Stokes solvers in 2D.

HHO with discontinuous or hybrid pressure, DG with BR2 liftings, static
condensation of element unknowns and a p-multilevel V-cycle preconditioner
for flexible GMRES.
"""

from .discretize import StokesSystem, assemble_system
from .manufactured import ManufacturedCase, PolynomialCase, error_norms
from .mesh import Mesh, apply_grading, classify_boundary, gen_quad_family, gen_tri_family, read_mesh, write_mesh
from .plevels import LevelConfig, LevelHierarchy, solve

__version__ = "0.1.0"

__all__ = [
    "Mesh", "gen_quad_family", "gen_tri_family", "apply_grading", "classify_boundary", "read_mesh", "write_mesh",
    "StokesSystem", "assemble_system", "ManufacturedCase", "PolynomialCase", "error_norms",
    "LevelConfig", "LevelHierarchy", "solve",
]
