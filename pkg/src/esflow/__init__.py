"""Evolving-surface finite elements for Willmore and surface diffusion flow.

The solver evolves a closed two-dimensional surface in R^3 whose normal
velocity is driven either by the bending-energy gradient (Willmore flow) or
by the surface Laplacian of the mean curvature (surface diffusion).  Mean
curvature and normal vector are evolved as independent nodal unknowns of a
coupled second-order system; the surface follows by nodal interpolation of
the velocity.
"""

from . import assembly, diagnostics, mesh, solver, surfaces
from .surfaces import (AnalyticSurface, Ellipsoid, ExactFields, PerturbedTorus,
                       RedBloodCell, Sphere, Torus, make_surface)
from .mesh import SurfaceMesh, build_reference, curve_mesh, gen_sphere_mesh, gen_torus_mesh
from .solver import FlowState, StepperConfig, bdf_step, init_state, run

__version__ = "0.1.0"

__all__ = [
    "assembly", "diagnostics", "mesh", "solver", "surfaces",
    "AnalyticSurface", "Sphere", "Torus", "Ellipsoid", "RedBloodCell",
    "PerturbedTorus", "ExactFields", "make_surface",
    "SurfaceMesh", "build_reference", "curve_mesh", "gen_sphere_mesh",
    "gen_torus_mesh",
    "FlowState", "StepperConfig", "init_state", "bdf_step", "run",
    "__version__",
]
