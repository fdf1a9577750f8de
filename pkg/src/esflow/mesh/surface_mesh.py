"""Curved surface triangulations and per-element geometry."""

from dataclasses import dataclass

import numpy as np

from .._layout import flatten_components, split_components
from .reference import build_reference


class MeshError(Exception):
    pass


class MeshTopologyError(MeshError):
    """The connectivity is not a closed, consistently oriented 2-manifold."""


class DegenerateElementError(MeshError):
    """An element's metric determinant is nonpositive at a quadrature point."""


class SurfaceMesh:
    """Closed oriented triangulation with isoparametric elements of degree k.

    Nodes are stored as an (N, 3) array; the corresponding flat coordinate
    vector in R^{3N} (component blocks, see _layout) is what the flow solver
    evolves.  The first three local nodes of every element are its corners.
    """

    def __init__(self, degree, connectivity, nodes, quad_order=None):
        self.degree = int(degree)
        self.reference = build_reference(self.degree, quad_order)
        self.connectivity = np.ascontiguousarray(connectivity, dtype=np.int64)
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        if self.connectivity.ndim != 2 or self.connectivity.shape[1] != self.reference.node_count:
            raise MeshError(
                f"connectivity must be (E, {self.reference.node_count}) for degree {degree}")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise MeshError("nodes must be an (N, 3) array")
        if self.connectivity.size and self.connectivity.max() >= self.nodes.shape[0]:
            raise MeshError("connectivity references missing nodes")

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_elements(self):
        return self.connectivity.shape[0]

    def coord_vector(self):
        """Nodal positions as a flat vector in R^{3N}."""
        return flatten_components(self.nodes)

    def corner_connectivity(self):
        return self.connectivity[:, :3]

    def directed_corner_edges(self):
        tri = self.corner_connectivity()
        return np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])

    def validate(self):
        """Check closedness and consistent orientation; raise on violation."""
        edges = self.directed_corner_edges()
        undirected = np.sort(edges, axis=1)
        _, inverse, counts = np.unique(undirected, axis=0, return_inverse=True,
                                       return_counts=True)
        if counts.min(initial=2) != 2 or counts.max(initial=2) != 2:
            bad = int(np.argmax(counts != 2))
            raise MeshTopologyError(
                f"mesh not closed: edge shared by {int(counts[bad])} elements")
        # a consistently oriented closed mesh traverses each edge once per direction
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        sorted_directed = edges[order]
        dup = np.all(sorted_directed[1:] == sorted_directed[:-1], axis=1)
        if np.any(dup):
            raise MeshTopologyError("mesh not consistently oriented")
        return self

    def mesh_width(self, x=None):
        """Maximal element diameter measured over all element nodes."""
        pos = self.nodes if x is None else split_components(x)
        elems = pos[self.connectivity]
        diff = elems[:, :, None, :] - elems[:, None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1).max()))


@dataclass
class GeometryTables:
    """Per-quadrature-point geometry of every element at coordinates x.

    ``weights`` already includes the surface measure sqrt(det(J^T J));
    ``basis_gradients[e, q, i]`` is the tangential gradient (a 3-vector) of
    basis function i, so nodal values contract to tangential gradients of
    the finite element function.
    """

    positions: np.ndarray        # (E, Q, 3)
    weights: np.ndarray          # (E, Q)
    basis_gradients: np.ndarray  # (E, Q, n, 3)
    min_det: np.ndarray          # (E,) smallest metric determinant per element


def geometry_tables(mesh, x):
    """Evaluate Jacobian-based geometry for all elements at coordinates x.

    The tangential gradient of a finite element function u_h is computed as
    J (J^T J)^{-1} grad_ref(u) with J the 3x2 reference-to-world Jacobian.
    """
    ref = mesh.reference
    pos = split_components(np.asarray(x, dtype=float))[mesh.connectivity]  # (E, n, 3)
    jac = np.einsum("end,nqr->eqdr", pos, ref.gradients, optimize=True)    # (E, Q, 3, 2)
    metric = np.einsum("eqdr,eqds->eqrs", jac, jac, optimize=True)         # (E, Q, 2, 2)
    det = metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] * metric[..., 1, 0]
    if np.any(det <= 0.0):
        eid = int(np.argwhere(np.any(det <= 0.0, axis=1))[0, 0])
        raise DegenerateElementError(
            f"element {eid}: metric determinant {det[eid].min():.3e} <= 0")
    inv = np.empty_like(metric)
    inv[..., 0, 0] = metric[..., 1, 1]
    inv[..., 1, 1] = metric[..., 0, 0]
    inv[..., 0, 1] = -metric[..., 0, 1]
    inv[..., 1, 0] = -metric[..., 1, 0]
    inv /= det[..., None, None]
    grads = np.einsum("eqdr,eqrs,nqs->eqnd", jac, inv, ref.gradients, optimize=True)
    weights = ref.quad_weights[None, :] * np.sqrt(det)
    positions = np.einsum("nq,end->eqd", ref.values, pos, optimize=True)
    return GeometryTables(positions=positions, weights=weights,
                          basis_gradients=grads, min_det=det.min(axis=1))


@dataclass
class ElementGeometry:
    """Quadrature-point geometry of a single element."""

    positions: np.ndarray        # (Q, 3)
    weights: np.ndarray          # (Q,)
    basis_gradients: np.ndarray  # (Q, n, 3)

    def tangential_gradient(self, nodal_values):
        """Tangential gradient of the element function with given nodal values."""
        return np.einsum("qnd,n...->q...d", self.basis_gradients,
                         np.asarray(nodal_values, dtype=float))


def element_geometry(mesh, x, element_id):
    """Geometry of one element; raises DegenerateElementError when singular."""
    sub = SurfaceMesh.__new__(SurfaceMesh)
    sub.degree = mesh.degree
    sub.reference = mesh.reference
    sub.connectivity = mesh.connectivity[element_id:element_id + 1]
    sub.nodes = split_components(np.asarray(x, dtype=float))
    tables = geometry_tables(sub, x)
    return ElementGeometry(positions=tables.positions[0], weights=tables.weights[0],
                           basis_gradients=tables.basis_gradients[0])
