from .reference import ReferenceElement, build_reference, lattice_nodes, triangle_quadrature
from .surface_mesh import (DegenerateElementError, ElementGeometry, GeometryTables,
                           MeshError, MeshTopologyError, SurfaceMesh, element_geometry,
                           geometry_tables)
from .generators import curve_mesh, gen_sphere_mesh, gen_torus_mesh, grade_minor_angle
from .io import MeshFileError, read_off, write_off, write_vtk

__all__ = [
    "ReferenceElement", "build_reference", "lattice_nodes", "triangle_quadrature",
    "SurfaceMesh", "GeometryTables", "ElementGeometry", "geometry_tables",
    "element_geometry", "MeshError", "MeshTopologyError", "DegenerateElementError",
    "curve_mesh", "gen_sphere_mesh", "gen_torus_mesh", "grade_minor_angle",
    "MeshFileError", "read_off", "write_off", "write_vtk",
]
