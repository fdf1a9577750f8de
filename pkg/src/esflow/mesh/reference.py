"""Reference triangle: Lagrange bases of degree k and triangle quadrature."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


def triangle_quadrature(order):
    """Positive rule on the reference triangle, exact for total degree <= order.

    Collapsed tensor product: Gauss-Legendre along the collapsed direction and
    Gauss-Jacobi with weight (1 - y) in the other, so the Duffy Jacobian is
    absorbed exactly.
    """
    if order < 0:
        raise ValueError("quadrature order must be nonnegative")
    n = max(1, math.ceil((order + 1) / 2))
    xu, wu = roots_legendre(n)
    u = 0.5 * (xu + 1.0)
    wa = 0.5 * wu
    xv, wv = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (xv + 1.0)
    wb = 0.25 * wv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([(uu * (1.0 - vv)).ravel(), vv.ravel()])
    wts = np.outer(wa, wb).ravel()
    return pts, wts


def lattice_nodes(k):
    """Lagrange node layout: vertices, then edge nodes per edge, then interior.

    Edge nodes are listed walking each edge in element order (0-1, 1-2, 2-0);
    for k = 2 this is the usual quadratic-triangle layout with midside nodes.
    """
    verts = [(0, 0), (k, 0), (0, k)]
    edges = []
    edges += [(i, 0) for i in range(1, k)]
    edges += [(k - i, i) for i in range(1, k)]
    edges += [(0, k - i) for i in range(1, k)]
    interior = [(i, j) for j in range(1, k) for i in range(1, k - j)]
    return np.array(verts + edges + interior, dtype=float) / k


def _monomial_exponents(k):
    return [(a, b) for a in range(k + 1) for b in range(k + 1 - a)]


def _monomial_values(points, exps):
    x, y = points[:, 0], points[:, 1]
    return np.column_stack([x ** a * y ** b for a, b in exps])


def _monomial_gradients(points, exps):
    x, y = points[:, 0], points[:, 1]
    cols_x, cols_y = [], []
    for a, b in exps:
        cols_x.append(a * x ** max(a - 1, 0) * y ** b if a else np.zeros_like(x))
        cols_y.append(b * x ** a * y ** max(b - 1, 0) if b else np.zeros_like(x))
    return np.column_stack(cols_x), np.column_stack(cols_y)


@dataclass(frozen=True)
class ReferenceElement:
    """Degree-k Lagrange element with a quadrature rule baked in."""

    degree: int
    nodes: np.ndarray            # (n, 2) reference node coordinates
    quad_points: np.ndarray      # (Q, 2)
    quad_weights: np.ndarray     # (Q,)
    values: np.ndarray           # (n, Q) basis values at quadrature points
    gradients: np.ndarray        # (n, Q, 2) reference gradients
    _coeffs: np.ndarray = field(repr=False, default=None)
    _exps: tuple = field(repr=False, default=None)

    @property
    def node_count(self):
        return self.nodes.shape[0]

    def evaluate(self, points):
        """Basis values at arbitrary reference points, shape (n, P)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (_monomial_values(pts, self._exps) @ self._coeffs).T

    def evaluate_gradients(self, points):
        """Reference basis gradients at arbitrary points, shape (n, P, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        gx, gy = _monomial_gradients(pts, self._exps)
        out = np.stack([(gx @ self._coeffs).T, (gy @ self._coeffs).T], axis=-1)
        return out


def build_reference(k, quad_order=None):
    """Reference element of degree k with exact-for-polynomials quadrature.

    The default quadrature order 2k + 2 keeps quadrature errors on curved
    elements well below the discretization error.
    """
    if not 1 <= k <= 4:
        raise ValueError(f"unsupported polynomial degree {k} (need 1 <= k <= 4)")
    if quad_order is None:
        quad_order = 2 * k + 2
    if quad_order < 2 * k + 2:
        raise ValueError(f"quadrature order {quad_order} too low for degree {k}")
    nodes = lattice_nodes(k)
    exps = _monomial_exponents(k)
    vand = _monomial_values(nodes, exps)
    coeffs = np.linalg.solve(vand, np.eye(len(exps)))
    qp, qw = triangle_quadrature(quad_order)
    values = (_monomial_values(qp, exps) @ coeffs).T
    gx, gy = _monomial_gradients(qp, exps)
    grads = np.stack([(gx @ coeffs).T, (gy @ coeffs).T], axis=-1)
    return ReferenceElement(degree=k, nodes=nodes, quad_points=qp, quad_weights=qw,
                            values=values, gradients=grads, _coeffs=coeffs,
                            _exps=tuple(exps))
