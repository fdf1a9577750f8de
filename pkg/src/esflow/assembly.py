"""Finite element blocks of the coupled curvature-flow system.

On the surface with nodal coordinates x and nodal fields u = (H; n) the flow
solver needs, per time step:

  mass        M_ij      = int phi_i phi_j
  stiffness   A_ij      = int grad phi_i . grad phi_j
  reaction    R1_ij     = -int |S|^2 phi_i phi_j                    (N x N)
              R2        =  int (H S - S^2) phi_i . phi_j            (3N x 3N)
  forcing     b_n       =  lower-order terms of the normal equation (3N)
  sources     s_V       =  int Q phi_j                              (N)
              s_z       =  int |S|^2 n phi_j                        (3N)

where S is the symmetric part of the tangential gradient of the discrete
normal field, |S|^2 its squared Frobenius norm, and Q = -H^3/2 + |S|^2 H the
cubic velocity term (dropped in surface-diffusion mode).  All coefficient
fields are evaluated at quadrature points from the degree-k interpolants.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ._layout import apply_blockwise, split_components
from .mesh import geometry_tables


@dataclass
class QuadratureFields:
    """u-dependent coefficient fields at the quadrature points."""

    H: np.ndarray        # (E, Q)
    nu: np.ndarray       # (E, Q, 3)
    grad_H: np.ndarray   # (E, Q, 3)
    shape_op: np.ndarray  # (E, Q, 3, 3) symmetrized gradient of nu
    absS2: np.ndarray    # (E, Q)
    cubic: np.ndarray    # (E, Q) Q-term; zeros in surface-diffusion mode


@dataclass
class SystemBlocks:
    """All assembled blocks of one linearly implicit step."""

    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    react_scalar: sp.csr_matrix   # N x N,  multiplies the normal velocity
    react_vector: sp.csr_matrix   # 3N x 3N, multiplies the curvature gradient
    force_vector: np.ndarray      # 3N, normal-equation forcing
    src_scalar: np.ndarray        # N, velocity-constraint source
    src_vector: np.ndarray        # 3N, gradient-constraint source
    min_det: np.ndarray           # per-element metric determinant floor


def _scatter_matrix(mesh, element_values):
    """Accumulate (E, n, n) element matrices into a CSR matrix."""
    conn = mesh.connectivity
    n = conn.shape[1]
    rows = np.repeat(conn, n, axis=1).ravel()
    cols = np.tile(conn, (1, n)).ravel()
    mat = sp.coo_matrix((element_values.ravel(), (rows, cols)),
                        shape=(mesh.num_nodes, mesh.num_nodes))
    return mat.tocsr()


def _scatter_vector(mesh, element_values, dim=1):
    """Accumulate (E, n) or (E, n, dim) element vectors into flat block layout."""
    out = np.zeros((mesh.num_nodes, dim))
    vals = element_values if dim > 1 else element_values[..., None]
    np.add.at(out, mesh.connectivity, vals)
    return np.ascontiguousarray(out.T).ravel() if dim > 1 else out[:, 0]


def quadrature_fields(mesh, geo, u, use_cubic=True):
    """Interpolate the nodal unknowns u = (H; n) to the quadrature points."""
    n_nodes = mesh.num_nodes
    h_nod = u[:n_nodes]
    nu_nod = split_components(u[n_nodes:])
    conn = mesh.connectivity
    val = mesh.reference.values
    h_q = np.einsum("nq,en->eq", val, h_nod[conn], optimize=True)
    nu_q = np.einsum("nq,end->eqd", val, nu_nod[conn], optimize=True)
    grad_h = np.einsum("eqnd,en->eqd", geo.basis_gradients, h_nod[conn], optimize=True)
    grad_nu = np.einsum("eqnd,enm->eqdm", geo.basis_gradients, nu_nod[conn], optimize=True)
    shape_op = 0.5 * (grad_nu + np.swapaxes(grad_nu, -1, -2))
    abs_s2 = np.einsum("eqdm,eqdm->eq", shape_op, shape_op, optimize=True)
    if use_cubic:
        cubic = -0.5 * h_q ** 3 + abs_s2 * h_q
    else:
        cubic = np.zeros_like(h_q)
    return QuadratureFields(H=h_q, nu=nu_q, grad_H=grad_h, shape_op=shape_op,
                            absS2=abs_s2, cubic=cubic)


def _mass_like(mesh, geo, coeff=None):
    val = mesh.reference.values
    w = geo.weights if coeff is None else geo.weights * coeff
    return _scatter_matrix(mesh, np.einsum("eq,iq,jq->eij", w, val, val, optimize=True))


def assemble_mass(mesh, x):
    """Surface mass matrix M(x)."""
    return _mass_like(mesh, geometry_tables(mesh, x))


def assemble_stiffness(mesh, x):
    """Surface stiffness matrix A(x) of the Laplace-Beltrami form."""
    geo = geometry_tables(mesh, x)
    vals = np.einsum("eq,eqid,eqjd->eij", geo.weights, geo.basis_gradients,
                     geo.basis_gradients, optimize=True)
    return _scatter_matrix(mesh, vals)


def _react_vector_matrix(mesh, geo, fields):
    """3N x 3N block matrix with 3x3 point coupling (H S - S^2)."""
    val = mesh.reference.values
    s2 = np.einsum("eqdm,eqmn->eqdn", fields.shape_op, fields.shape_op, optimize=True)
    cmat = fields.H[..., None, None] * fields.shape_op - s2
    n_nodes = mesh.num_nodes
    conn = mesh.connectivity
    n = conn.shape[1]
    rows = np.repeat(conn, n, axis=1).ravel()
    cols = np.tile(conn, (1, n)).ravel()
    blocks = [[None] * 3 for _ in range(3)]
    for a in range(3):
        for b in range(3):
            vals = np.einsum("eq,eq,iq,jq->eij", geo.weights, cmat[..., a, b],
                             val, val, optimize=True)
            blocks[a][b] = sp.coo_matrix((vals.ravel(), (rows, cols)),
                                         shape=(n_nodes, n_nodes))
    return sp.bmat(blocks, format="csr")


def assemble_reaction(mesh, x, u):
    """Curvature reaction blocks multiplying the algebraic variables."""
    geo = geometry_tables(mesh, x)
    fields = quadrature_fields(mesh, geo, u)
    r1 = _mass_like(mesh, geo, -fields.absS2)
    r2 = _react_vector_matrix(mesh, geo, fields)
    return r1, r2


def _forcing_vector(mesh, geo, fields):
    val = mesh.reference.values
    s_grad_h = np.einsum("eqdm,eqm->eqd", fields.shape_op, fields.grad_H, optimize=True)
    s2_grad_h = np.einsum("eqdm,eqm->eqd", fields.shape_op, s_grad_h, optimize=True)
    grad_h2 = np.einsum("eqd,eqd->eq", fields.grad_H, fields.grad_H, optimize=True)
    # zeroth-order part: (|grad H|^2 - Q H) nu + S^2 grad H
    point = (grad_h2 - fields.cubic * fields.H)[..., None] * fields.nu + s2_grad_h
    fe = np.einsum("eq,eql,iq->eil", geo.weights, point, val, optimize=True)
    # 2 (S grad H) . grad(phi) nu_l
    dots = np.einsum("eqd,eqid->eqi", s_grad_h, geo.basis_gradients, optimize=True)
    fe += 2.0 * np.einsum("eq,eqi,eql->eil", geo.weights, dots, fields.nu, optimize=True)
    # Q times the l-th component of the tangential basis gradient
    fe += np.einsum("eq,eqil->eil", geo.weights * fields.cubic, geo.basis_gradients,
                    optimize=True)
    return _scatter_vector(mesh, fe, dim=3)


def assemble_forcing(mesh, x, u, use_cubic=True):
    """Lower-order forcing of the normal-vector equation (length 3N)."""
    geo = geometry_tables(mesh, x)
    fields = quadrature_fields(mesh, geo, u, use_cubic)
    return _forcing_vector(mesh, geo, fields)


def _source_vectors(mesh, geo, fields):
    val = mesh.reference.values
    g1 = _scatter_vector(mesh, np.einsum("eq,iq->ei", geo.weights * fields.cubic,
                                         val, optimize=True))
    ge = np.einsum("eq,eql,iq->eil", geo.weights * fields.absS2, fields.nu, val,
                   optimize=True)
    g2 = _scatter_vector(mesh, ge, dim=3)
    return g1, g2


def assemble_source(mesh, x, u, use_cubic=True):
    """Constraint sources: cubic term (N) and |S|^2-weighted normal (3N)."""
    geo = geometry_tables(mesh, x)
    fields = quadrature_fields(mesh, geo, u, use_cubic)
    return _source_vectors(mesh, geo, fields)


def assemble_flow_blocks(mesh, x, u, use_cubic=True):
    """All blocks of one step from a single geometry/field sweep."""
    geo = geometry_tables(mesh, x)
    fields = quadrature_fields(mesh, geo, u, use_cubic)
    val = mesh.reference.values
    mass = _mass_like(mesh, geo)
    stiffness = _scatter_matrix(mesh, np.einsum(
        "eq,eqid,eqjd->eij", geo.weights, geo.basis_gradients, geo.basis_gradients,
        optimize=True))
    react_scalar = _mass_like(mesh, geo, -fields.absS2)
    react_vector = _react_vector_matrix(mesh, geo, fields)
    force_vector = _forcing_vector(mesh, geo, fields)
    src_scalar, src_vector = _source_vectors(mesh, geo, fields)
    return SystemBlocks(mass=mass, stiffness=stiffness, react_scalar=react_scalar,
                        react_vector=react_vector, force_vector=force_vector,
                        src_scalar=src_scalar, src_vector=src_vector,
                        min_det=geo.min_det)


def surface_area(mass):
    """Total measure 1^T M 1."""
    ones = np.ones(mass.shape[0])
    return float(ones @ (mass @ ones))


def willmore_energy(mass, h_nodal):
    """Bending energy of the discrete surface, H^T M H / 2."""
    return 0.5 * float(h_nodal @ (mass @ h_nodal))


def norms(mass, stiffness, vec, dim=1):
    """(L2, seminorm, H1) triple of a nodal vector.

    The H1 value is composed as sqrt(m^2 + a^2), so the three satisfy the
    Pythagorean identity exactly.
    """
    m2 = float(vec @ apply_blockwise(mass, vec, dim))
    a2 = float(vec @ apply_blockwise(stiffness, vec, dim))
    m2 = max(m2, 0.0)
    a2 = max(a2, 0.0)
    return np.sqrt(m2), np.sqrt(a2), np.sqrt(m2 + a2)


def dual_norm(mass, gram, vec, dim=1):
    """Discrete H^{-1}-type norm sqrt(d^T M K^{-1} M d) with K = M + A.

    One sparse solve K y = M d per component block.
    """
    lu = splu(gram.tocsc())
    r = apply_blockwise(mass, vec, dim)
    total = 0.0
    n = mass.shape[0]
    for ell in range(dim):
        block = r[ell * n:(ell + 1) * n]
        total += float(block @ lu.solve(block))
    return np.sqrt(max(total, 0.0))


def energy_area_sweep(mesh, x, h_nodal):
    """(Willmore energy, area) directly from the quadrature sweep.

    Identical quadrature to the mass-matrix route, without forming M.
    """
    geo = geometry_tables(mesh, x)
    val = mesh.reference.values
    h_q = np.einsum("nq,en->eq", val, np.asarray(h_nodal)[mesh.connectivity],
                    optimize=True)
    energy = 0.5 * float(np.sum(geo.weights * h_q ** 2))
    return energy, float(np.sum(geo.weights))


def fe_norm(mesh, x, vec, dim=1, kind="K"):
    """Element-sweep evaluation of the discrete L2/H1 norms.

    Numerically equal to the matrix quadratic forms (same quadrature), but
    the element-wise accumulation is exactly invariant under node
    renumbering, which the matrix route is not.
    """
    geo = geometry_tables(mesh, x)
    val = mesh.reference.values
    comp = vec.reshape(dim, mesh.num_nodes)
    l2 = 0.0
    h1 = 0.0
    for ell in range(dim):
        nodal = comp[ell][mesh.connectivity]
        vq = np.einsum("nq,en->eq", val, nodal, optimize=True)
        if kind in ("M", "K"):
            l2 += float(np.sum(geo.weights * vq ** 2))
        if kind in ("A", "K"):
            gq = np.einsum("eqnd,en->eqd", geo.basis_gradients, nodal, optimize=True)
            h1 += float(np.sum(geo.weights * np.einsum("eqd,eqd->eq", gq, gq)))
    return np.sqrt(l2 + h1)
