"""Nodal vector layout helpers.

Vector-valued nodal fields are stored as flat column vectors with component
blocks: entry ``j + l*N`` holds component ``l`` of node ``j``.  Scalar fields
occupy a single block of length ``N``.
"""

import numpy as np


def flatten_components(points):
    """(N, d) array of per-node values -> flat block vector of length d*N."""
    return np.ascontiguousarray(points.T).ravel()


def split_components(vec, dim=3):
    """Flat block vector of length d*N -> (N, d) array (a copy)."""
    n = vec.size // dim
    if vec.size != dim * n:
        raise ValueError(f"vector length {vec.size} is not a multiple of {dim}")
    return np.ascontiguousarray(vec.reshape(dim, n).T)


def apply_blockwise(mat, vec, dim):
    """Apply the d-fold block-diagonal extension of a sparse N x N matrix.

    The Kronecker product I_d (x) mat is never formed; the matrix acts on
    each component block of ``vec`` in turn.
    """
    n = mat.shape[0]
    if vec.size != dim * n:
        raise ValueError(f"vector length {vec.size} does not match {dim} blocks of {n}")
    out = np.empty_like(vec)
    for ell in range(dim):
        out[ell * n:(ell + 1) * n] = mat @ vec[ell * n:(ell + 1) * n]
    return out


def solve_blockwise(solve, vec, dim):
    """Apply a scalar-block solver (e.g. an splu solve) to each component."""
    n = vec.size // dim
    out = np.empty_like(vec)
    for ell in range(dim):
        out[ell * n:(ell + 1) * n] = solve(vec[ell * n:(ell + 1) * n])
    return out
