"""Independent brute-force assembly used as the test oracle.

Everything here is written with explicit per-element, per-point scalar loops
and dense matrices, sharing no evaluation code with the vectorized assembly
paths.  Basis values come from the reference element's polynomial evaluator;
the quadrature rule is a parameter so the same routines double as a
quadrature-refinement oracle.
"""

import numpy as np

from esflow.mesh import triangle_quadrature


def element_data(mesh, x, eid, qpts):
    """Positions, Jacobians, measures and basis tables at given ref points."""
    ref = mesh.reference
    vals = ref.evaluate(qpts)              # (n, Q)
    grads = ref.evaluate_gradients(qpts)   # (n, Q, 2)
    coords = x.reshape(3, -1).T[mesh.connectivity[eid]]   # (n, 3)
    n, nq = vals.shape
    jac = np.zeros((nq, 3, 2))
    for q in range(nq):
        for i in range(n):
            for d in range(3):
                for r in range(2):
                    jac[q, d, r] += coords[i, d] * grads[i, q, r]
    meas = np.zeros(nq)
    gvec = np.zeros((nq, n, 3))
    for q in range(nq):
        gram = jac[q].T @ jac[q]
        det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
        meas[q] = np.sqrt(det)
        inv = np.array([[gram[1, 1], -gram[0, 1]], [-gram[1, 0], gram[0, 0]]]) / det
        for i in range(n):
            gvec[q, i] = jac[q] @ (inv @ grads[i, q])
    return vals, meas, gvec


def fields_at_points(mesh, x, u, eid, qpts):
    """H, nu, grad H, symmetrized grad nu, |S|^2 and Q at the given points."""
    ref = mesh.reference
    vals, meas, gvec = element_data(mesh, x, eid, qpts)
    n_nodes = mesh.num_nodes
    conn = mesh.connectivity[eid]
    h_loc = u[:n_nodes][conn]
    nu_loc = u[n_nodes:].reshape(3, n_nodes).T[conn]
    n, nq = vals.shape
    out = []
    for q in range(nq):
        h = sum(h_loc[i] * vals[i, q] for i in range(n))
        nu = sum(nu_loc[i] * vals[i, q] for i in range(n))
        grad_h = sum(h_loc[i] * gvec[q, i] for i in range(n))
        grad_nu = np.zeros((3, 3))
        for i in range(n):
            grad_nu += np.outer(gvec[q, i], nu_loc[i])
        s_op = 0.5 * (grad_nu + grad_nu.T)
        abs_s2 = float(np.sum(s_op * s_op))
        cubic = -0.5 * h ** 3 + abs_s2 * h
        out.append((h, nu, grad_h, s_op, abs_s2, cubic))
    return vals, meas, gvec, out


def dense_mass(mesh, x, order=None):
    qpts, qw = triangle_quadrature(order or 2 * mesh.degree + 2)
    n_nodes = mesh.num_nodes
    mat = np.zeros((n_nodes, n_nodes))
    for eid in range(mesh.num_elements):
        vals, meas, _ = element_data(mesh, x, eid, qpts)
        conn = mesh.connectivity[eid]
        for q in range(len(qw)):
            w = qw[q] * meas[q]
            for i in range(len(conn)):
                for j in range(len(conn)):
                    mat[conn[i], conn[j]] += w * vals[i, q] * vals[j, q]
    return mat


def dense_stiffness(mesh, x, order=None):
    qpts, qw = triangle_quadrature(order or 2 * mesh.degree + 2)
    n_nodes = mesh.num_nodes
    mat = np.zeros((n_nodes, n_nodes))
    for eid in range(mesh.num_elements):
        _, meas, gvec = element_data(mesh, x, eid, qpts)
        conn = mesh.connectivity[eid]
        for q in range(len(qw)):
            w = qw[q] * meas[q]
            for i in range(len(conn)):
                for j in range(len(conn)):
                    mat[conn[i], conn[j]] += w * float(gvec[q, i] @ gvec[q, j])
    return mat


def dense_reaction(mesh, x, u, order=None):
    qpts, qw = triangle_quadrature(order or 2 * mesh.degree + 2)
    n_nodes = mesh.num_nodes
    r1 = np.zeros((n_nodes, n_nodes))
    r2 = np.zeros((3 * n_nodes, 3 * n_nodes))
    for eid in range(mesh.num_elements):
        vals, meas, _, flds = fields_at_points(mesh, x, u, eid, qpts)
        conn = mesh.connectivity[eid]
        for q in range(len(qw)):
            h, nu, grad_h, s_op, abs_s2, cubic = flds[q]
            w = qw[q] * meas[q]
            coupling = h * s_op - s_op @ s_op
            for i in range(len(conn)):
                for j in range(len(conn)):
                    pij = w * vals[i, q] * vals[j, q]
                    r1[conn[i], conn[j]] += -abs_s2 * pij
                    for a in range(3):
                        for b in range(3):
                            r2[conn[i] + a * n_nodes, conn[j] + b * n_nodes] += \
                                coupling[a, b] * pij
    return r1, r2


def dense_forcing(mesh, x, u, order=None, use_cubic=True):
    qpts, qw = triangle_quadrature(order or 2 * mesh.degree + 2)
    n_nodes = mesh.num_nodes
    vec = np.zeros(3 * n_nodes)
    for eid in range(mesh.num_elements):
        vals, meas, gvec, flds = fields_at_points(mesh, x, u, eid, qpts)
        conn = mesh.connectivity[eid]
        for q in range(len(qw)):
            h, nu, grad_h, s_op, abs_s2, cubic = flds[q]
            if not use_cubic:
                cubic = 0.0
            w = qw[q] * meas[q]
            s_grad_h = s_op @ grad_h
            point = (float(grad_h @ grad_h) * nu + s_op @ s_grad_h)
            for j in range(len(conn)):
                for ell in range(3):
                    val = point[ell] * vals[j, q]
                    val += 2.0 * float(s_grad_h @ gvec[q, j]) * nu[ell]
                    val += cubic * gvec[q, j][ell]
                    val -= cubic * h * nu[ell] * vals[j, q]
                    vec[conn[j] + ell * n_nodes] += w * val
    return vec


def dense_source(mesh, x, u, order=None, use_cubic=True):
    qpts, qw = triangle_quadrature(order or 2 * mesh.degree + 2)
    n_nodes = mesh.num_nodes
    g1 = np.zeros(n_nodes)
    g2 = np.zeros(3 * n_nodes)
    for eid in range(mesh.num_elements):
        vals, meas, _, flds = fields_at_points(mesh, x, u, eid, qpts)
        conn = mesh.connectivity[eid]
        for q in range(len(qw)):
            h, nu, grad_h, s_op, abs_s2, cubic = flds[q]
            if not use_cubic:
                cubic = 0.0
            w = qw[q] * meas[q]
            for j in range(len(conn)):
                g1[conn[j]] += w * cubic * vals[j, q]
                for ell in range(3):
                    g2[conn[j] + ell * n_nodes] += w * abs_s2 * nu[ell] * vals[j, q]
    return g1, g2
