import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatsource.geometry import PolarPoint
from heatsource.mesh import (
    OutOfDomainError,
    build_mesh,
    element_areas,
    isoparametric,
    locate,
    shape,
    shape_grad,
)


def test_small_mesh_counts():
    mesh = build_mesh(2, 4)
    assert (mesh.n_nodes, mesh.n_elements, mesh.boundary.size, mesh.n_free) == (9, 8, 4, 5)


def test_production_mesh_counts():
    mesh = build_mesh(70, 70)
    assert (mesh.n_nodes, mesh.n_elements) == (4901, 4900)
    assert mesh.n_free == mesh.n_nodes - 70


def test_origin_collapse_and_periodicity():
    mesh = build_mesh(3, 6)
    first = mesh.elements[mesh.element_id(0, 0)]
    assert first[0] == first[3] == mesh.origin
    last = mesh.elements[mesh.element_id(1, 5)]
    assert last[2] == mesh.node_id(2, 0) and last[3] == mesh.node_id(1, 0)


def test_node_coordinates_uniform():
    mesh = build_mesh(4, 8)
    assert mesh.node_r[mesh.node_id(3, 5)] == pytest.approx(0.75)
    assert mesh.node_theta[mesh.node_id(3, 5)] == pytest.approx(5 * 2 * math.pi / 8)
    assert np.all(mesh.node_r[mesh.boundary] == 1.0)
    assert np.all(mesh.free_index[mesh.boundary] == -1)


def test_node_incidence():
    mesh = build_mesh(5, 7)
    counts = np.bincount(mesh.elements.ravel(), minlength=mesh.n_nodes)
    # the collapsed corner appears twice in each innermost element
    assert counts[mesh.origin] == 2 * mesh.n_theta
    assert len({e for e in range(mesh.n_elements) if mesh.origin in mesh.elements[e]}) == mesh.n_theta
    interior = np.setdiff1d(mesh.free, [mesh.origin])
    assert np.all(counts[interior] == 4)


def test_bad_parameters():
    with pytest.raises(ValueError):
        build_mesh(1, 4)
    with pytest.raises(ValueError):
        build_mesh(2, 3)


def test_shape_examples():
    np.testing.assert_allclose(shape(-1.0, -1.0), [1, 0, 0, 0])
    np.testing.assert_allclose(shape(0.0, 0.0), [0.25] * 4)
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    for a, (x, y) in enumerate(corners):
        np.testing.assert_allclose(shape(x, y), np.eye(4)[a])


def test_partition_of_unity_and_gradients():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(10, 2))
    np.testing.assert_allclose(shape(pts[:, 0], pts[:, 1]).sum(axis=-1), 1.0, atol=1e-15)
    np.testing.assert_allclose(shape_grad(pts[:, 0], pts[:, 1]).sum(axis=-2), 0.0, atol=1e-15)
    h = 1e-6
    for xi, eta in pts[:3]:
        fd_xi = (shape(xi + h, eta) - shape(xi - h, eta)) / (2 * h)
        np.testing.assert_allclose(shape_grad(xi, eta)[:, 0], fd_xi, atol=1e-9)


def test_locate_cell_midpoint():
    mesh = build_mesh(2, 4)
    elem, xi, eta = locate(mesh, PolarPoint(0.25, math.pi / 4))
    assert elem == mesh.element_id(0, 0)
    assert (xi, eta) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_locate_edge_goes_to_lower_element():
    mesh = build_mesh(4, 8)
    elem, xi, _ = locate(mesh, PolarPoint(0.5, 0.1))
    assert mesh.element_ij(elem) == (1, 0) and xi == pytest.approx(1.0)
    elem, _, eta = locate(mesh, PolarPoint(0.3, 2 * math.pi / 8))
    assert mesh.element_ij(elem) == (1, 0) and eta == pytest.approx(1.0)


def test_locate_rejects_boundary():
    with pytest.raises(OutOfDomainError):
        locate(build_mesh(4, 8), PolarPoint(1.0, 0.2))


@settings(max_examples=1000, deadline=None)
@given(st.floats(1e-9, 1 - 1e-9), st.floats(0.0, 2 * math.pi - 1e-9))
def test_isoparametric_round_trip(r, theta):
    mesh = build_mesh(13, 17)
    p = PolarPoint(r, theta)
    elem, xi, eta = locate(mesh, p)
    assert -1.0 <= xi <= 1.0 and -1.0 <= eta <= 1.0
    q = isoparametric(mesh, elem, xi, eta)
    assert abs(q.r - p.r) <= 1e-14
    assert abs(q.theta - p.theta) <= 1e-14


def test_total_area_is_pi():
    for m_r, n_t in [(2, 4), (20, 30), (70, 70)]:
        assert abs(element_areas(build_mesh(m_r, n_t)).sum() - math.pi) <= 1e-12


def test_expand_and_interpolate():
    mesh = build_mesh(3, 5)
    full = mesh.expand(np.ones(mesh.n_free))
    assert full[mesh.boundary].sum() == 0.0 and full[mesh.free].sum() == mesh.n_free
    vals = mesh.interpolate(lambda r, t: 1.0 - r)
    assert vals[mesh.origin] == 1.0 and np.all(vals[mesh.boundary] == 0.0)
