"""OFF input/output for linear meshes and legacy ASCII VTK output.

OFF files carry only linear (corner) connectivity and are round-tripped
losslessly.  VTK output writes quadratic triangles as native quadratic cells
or, when the consumer lacks quadratic support, as four linear sub-triangles
per element.
"""

import numpy as np

from .._layout import split_components
from .surface_mesh import MeshError, SurfaceMesh


class MeshFileError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def write_off(path, mesh):
    if mesh.degree != 1:
        raise MeshError("OFF output supports linear meshes only")
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.num_nodes} {mesh.num_elements} 0\n")
        for p in mesh.nodes:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for tri in mesh.connectivity:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")


def read_off(path):
    """Read a triangle OFF file and validate the closed-mesh invariants."""
    with open(path) as fh:
        lines = fh.readlines()

    def tokens():
        for lineno, raw in enumerate(lines, start=1):
            body = raw.split("#", 1)[0].strip()
            if body:
                yield lineno, body

    stream = tokens()
    try:
        lineno, header = next(stream)
    except StopIteration:
        raise MeshFileError(path, 1, "empty file") from None
    if header != "OFF":
        raise MeshFileError(path, lineno, f"expected OFF header, got '{header}'")
    try:
        lineno, counts = next(stream)
        n_nodes, n_elems, _ = (int(tok) for tok in counts.split())
    except (StopIteration, ValueError):
        raise MeshFileError(path, lineno + 1, "missing or malformed count line") from None
    nodes = np.empty((n_nodes, 3))
    for i in range(n_nodes):
        try:
            lineno, body = next(stream)
            nodes[i] = [float(tok) for tok in body.split()[:3]]
        except (StopIteration, ValueError):
            raise MeshFileError(path, lineno, f"bad vertex line (vertex {i})") from None
    conn = np.empty((n_elems, 3), dtype=np.int64)
    for e in range(n_elems):
        try:
            lineno, body = next(stream)
            toks = body.split()
            if int(toks[0]) != 3:
                raise MeshFileError(path, lineno, "only triangle faces are supported")
            conn[e] = [int(t) for t in toks[1:4]]
        except (StopIteration, ValueError, IndexError):
            raise MeshFileError(path, lineno, f"bad face line (face {e})") from None
    mesh = SurfaceMesh(1, conn, nodes)
    mesh.validate()
    return mesh


_QUAD_SPLIT = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


def write_vtk(path, mesh, x=None, point_data=None, linear_subcells=False):
    """Legacy ASCII VTK unstructured grid with optional nodal scalar fields.

    Quadratic meshes are written as quadratic triangle cells (type 22) unless
    ``linear_subcells`` asks for the 4-way linear refinement (type 5).
    """
    pos = mesh.nodes if x is None else split_components(np.asarray(x, dtype=float))
    point_data = point_data or {}
    if mesh.degree == 1:
        cells, ctype = mesh.connectivity, 5
    elif mesh.degree == 2:
        if linear_subcells:
            cells = mesh.connectivity[:, _QUAD_SPLIT].reshape(-1, 3)
            ctype = 5
        else:
            cells, ctype = mesh.connectivity, 22
    else:
        cells, ctype = mesh.corner_connectivity(), 5
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("esflow surface snapshot\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pos)} double\n")
        for p in pos:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        npc = cells.shape[1]
        fh.write(f"CELLS {len(cells)} {len(cells) * (npc + 1)}\n")
        for c in cells:
            fh.write(str(npc) + " " + " ".join(str(i) for i in c) + "\n")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        for _ in range(len(cells)):
            fh.write(f"{ctype}\n")
        if point_data:
            fh.write(f"POINT_DATA {len(pos)}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=float)
                if not np.all(np.isfinite(values)):
                    raise MeshError(f"refusing to write non-finite field '{name}'")
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in values:
                    fh.write(f"{float(val)!r}\n")
