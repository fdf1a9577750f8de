"""Built-in mesh generators: subdivided icosahedra and structured torus grids.

Node deduplication uses exact integer lattice keys, so shared edge and vertex
nodes coincide bitwise between neighbouring elements and the generated meshes
are closed and consistently oriented by construction.
"""

import numpy as np

from .reference import lattice_nodes
from .surface_mesh import MeshError, SurfaceMesh

_PHI = (1.0 + 5.0 ** 0.5) / 2.0

_ICO_VERTS = np.array([
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
], dtype=float)

_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


class _NodePool:
    """Deduplicates lattice nodes via exact (vertex, integer weight) keys."""

    def __init__(self):
        self._index = {}
        self.points = []

    def get(self, key, position):
        idx = self._index.get(key)
        if idx is None:
            idx = len(self.points)
            self._index[key] = idx
            self.points.append(position)
        return idx

    def array(self):
        return np.array(self.points, dtype=float)


def _lattice_key(corner_ids, weights):
    items = tuple(sorted((int(c), int(w)) for c, w in zip(corner_ids, weights) if w))
    return items


def _subdivide_triangles(verts, faces, sections):
    """Split every triangle into sections^2 triangles on a barycentric lattice."""
    pool = _NodePool()
    n = sections
    tris = []
    for (ia, ib, ic) in faces:
        pa, pb, pc = verts[ia], verts[ib], verts[ic]
        idx = {}
        for j in range(n + 1):
            for i in range(n + 1 - j):
                w = (n - i - j, i, j)
                pos = (w[0] * pa + w[1] * pb + w[2] * pc) / n
                idx[(i, j)] = pool.get(_lattice_key((ia, ib, ic), w), pos)
        for j in range(n):
            for i in range(n - j):
                tris.append((idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]))
                if i + j < n - 1:
                    tris.append((idx[(i + 1, j)], idx[(i + 1, j + 1)], idx[(i, j + 1)]))
    return pool.array(), np.array(tris, dtype=np.int64)


def curve_mesh(linear_mesh, surface, degree=2):
    """Raise a linear mesh to degree k by projecting new lattice nodes.

    Edge and interior nodes are placed at the lattice points of each flat
    triangle and moved onto the surface with the surface's projection, so the
    curved mesh interpolates the surface in all nodes.
    """
    if linear_mesh.degree != 1:
        raise MeshError("curve_mesh expects a linear input mesh")
    if degree == 1:
        return linear_mesh
    k = int(degree)
    lattice = (lattice_nodes(k) * k + 0.5).astype(np.int64)  # integer lattice coords
    pool = _NodePool()
    verts = linear_mesh.nodes
    elems = []
    for tri in linear_mesh.corner_connectivity():
        ids = []
        for (i, j) in lattice:
            w = (k - i - j, i, j)
            key = _lattice_key(tuple(tri), w)
            pos = (w[0] * verts[tri[0]] + w[1] * verts[tri[1]] + w[2] * verts[tri[2]]) / k
            ids.append((key, pos))
        elems.append(ids)
    conn = np.empty((len(elems), lattice.shape[0]), dtype=np.int64)
    for e, ids in enumerate(elems):
        for loc, (key, pos) in enumerate(ids):
            conn[e, loc] = pool.get(key, pos)
    nodes = pool.array()
    corner_keys = {pool._index[k_]: True for k_ in pool._index if len(k_) == 1}
    new_mask = np.ones(len(nodes), dtype=bool)
    new_mask[list(corner_keys)] = False
    nodes[new_mask] = surface.project(nodes[new_mask])
    return SurfaceMesh(k, conn, nodes).validate()


def gen_sphere_mesh(surface, subdivisions, degree=2, sections=None):
    """Icosahedron-based mesh of a sphere or of a smooth image of one.

    ``subdivisions`` halves the mesh width per level (edge sections double);
    ``sections`` overrides the per-edge section count directly for node-count
    control.  Surfaces that are smooth deformations of the unit sphere (an
    ellipsoid, the biconcave cell) are meshed by mapping a unit icosphere.
    """
    if subdivisions < 0:
        raise MeshError("subdivisions must be >= 0")
    n = int(sections) if sections else 2 ** int(subdivisions)
    mapped = getattr(surface, "from_unit_sphere", None)
    verts, tris = _subdivide_triangles(_ICO_VERTS, _ICO_FACES, n) if n > 1 else (
        _ICO_VERTS.copy(), _ICO_FACES.copy())
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    if mapped is None:
        raise MeshError(f"surface '{surface.name}' has no sphere-type parametrization")
    from ..surfaces import Sphere
    unit = Sphere(1.0)
    mesh = SurfaceMesh(1, tris, verts).validate()
    if degree > 1:
        mesh = curve_mesh(mesh, unit, degree)
    return SurfaceMesh(mesh.degree, mesh.connectivity, mapped(mesh.nodes)).validate()


def grade_minor_angle(t, ratio):
    """Smooth periodic stretching of the minor angle.

    Spacing is largest at t = 0 (outer equator) and smallest at t = pi (inner
    equator); the max/min spacing ratio equals ``ratio``.
    """
    if ratio <= 0:
        raise MeshError("grading ratio must be positive")
    beta = (ratio - 1.0) / (ratio + 1.0)
    return t + beta * np.sin(t)


def gen_torus_mesh(surface, n_major, n_minor, degree=2, grading_ratio=None):
    """Structured periodic grid on a torus-like surface.

    All lattice nodes (including the curved-element nodes) are placed by the
    surface parametrization, optionally with the minor angle graded toward
    the inner equator.
    """
    if n_major < 4 or n_minor < 4:
        raise MeshError("torus grid needs n_major, n_minor >= 4")
    k = int(degree)
    fm, fn = k * n_major, k * n_minor
    phi = 2.0 * np.pi * np.arange(fm) / fm
    t = 2.0 * np.pi * np.arange(fn) / fn
    theta = grade_minor_angle(t, grading_ratio) if grading_ratio else t
    pp, tt = np.meshgrid(phi, theta, indexing="ij")
    nodes = surface.param_point(tt.ravel(), pp.ravel())

    def nid(i, j):
        return (i % fm) * fn + (j % fn)

    lattice = (lattice_nodes(k) * k + 0.5).astype(np.int64)
    conn = []
    for ci in range(n_major):
        for cj in range(n_minor):
            i0, j0 = k * ci, k * cj
            corners_a = ((i0, j0), (i0 + k, j0), (i0 + k, j0 + k))
            corners_b = ((i0, j0), (i0 + k, j0 + k), (i0, j0 + k))
            for corners in (corners_a, corners_b):
                p0 = np.array(corners[0])
                e1 = (np.array(corners[1]) - p0) // k
                e2 = (np.array(corners[2]) - p0) // k
                elem = []
                for (a, b) in lattice:
                    ij = p0 + a * e1 + b * e2
                    elem.append(nid(ij[0], ij[1]))
                conn.append(elem)
    mesh = SurfaceMesh(k, np.array(conn, dtype=np.int64), nodes)
    return mesh.validate()
