import math

import numpy as np
import pytest

from esflow.mesh import build_reference, lattice_nodes, triangle_quadrature


def monomial_integral(a, b):
    # exact value of the triangle integral of x^a y^b
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("order", [2, 4, 6, 8, 10])
def test_quadrature_exact_for_polynomials(order):
    pts, wts = triangle_quadrature(order)
    assert abs(wts.sum() - 0.5) < 1e-15
    assert np.all(wts > 0)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            approx = np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b)
            assert abs(approx - monomial_integral(a, b)) < 1e-14, (a, b)


def test_quadrature_order6_x4y2():
    pts, wts = triangle_quadrature(6)
    value = np.sum(wts * pts[:, 0] ** 4 * pts[:, 1] ** 2)
    assert abs(value - monomial_integral(4, 2)) < 1e-15
    assert abs(monomial_integral(4, 2) - 1.0 / 840.0) < 1e-18


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_basis_delta_property(k):
    ref = build_reference(k)
    vals = ref.evaluate(ref.nodes)
    assert np.max(np.abs(vals - np.eye(ref.node_count))) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_partition_of_unity(k):
    ref = build_reference(k)
    assert np.max(np.abs(ref.values.sum(axis=0) - 1.0)) < 1e-14
    assert np.max(np.abs(ref.gradients.sum(axis=0))) < 1e-12


def test_k1_basis_is_barycentric():
    ref = build_reference(1)
    pts = np.array([[0.3, 0.2], [0.1, 0.7]])
    vals = ref.evaluate(pts)
    bary = np.array([1 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    assert np.max(np.abs(vals - bary)) < 1e-14


def test_k2_layout_and_values():
    ref = build_reference(2)
    assert ref.node_count == 6
    # midside node of edge 0-1 sits at (1/2, 0) and carries basis value 1 there
    assert np.allclose(ref.nodes[3], [0.5, 0.0])
    vals = ref.evaluate(np.array([[0.5, 0.0]]))[:, 0]
    assert abs(vals[3] - 1.0) < 1e-13
    assert np.max(np.abs(vals[[0, 1, 2]])) < 1e-13


def test_node_counts():
    for k in range(1, 5):
        assert lattice_nodes(k).shape[0] == (k + 1) * (k + 2) // 2


def test_degree_bounds():
    with pytest.raises(ValueError):
        build_reference(0)
    with pytest.raises(ValueError):
        build_reference(5)
    with pytest.raises(ValueError):
        build_reference(2, quad_order=3)
