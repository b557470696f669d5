import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from heatsource.bessel import bessel_zeros
from heatsource.fem import (
    EdgeProximityError,
    assemble,
    boundary_flux,
    derivative_load,
    flux_integral,
    flux_response,
    generalized_min_eigenvalue,
    point_load,
    solve_forward,
    solve_sensitivity,
    solve_stationary,
)
from heatsource.geometry import SourcePoint
from heatsource.mesh import build_mesh
from heatsource.spectral import flux_trace


@pytest.fixture(scope="module")
def sys20():
    return assemble(build_mesh(20, 20))


@pytest.fixture(scope="module")
def sys40():
    return assemble(build_mesh(40, 40))


def _mid_cell(mesh, i, j):
    return SourcePoint((i + 0.5) * mesh.h_r, (j + 0.5) * mesh.h_theta)


def test_mass_and_stiffness_basic_identities(sys20):
    assert sys20.mass_full.sum() == pytest.approx(math.pi, abs=1e-10)
    ones = np.ones(sys20.mesh.n_nodes)
    assert np.max(np.abs(sys20.stiffness_full @ ones)) <= 1e-10
    for mat in (sys20.mass, sys20.stiffness):
        assert spla.norm(mat - mat.T) <= 1e-14 * spla.norm(mat)


def test_first_eigenvalue_matches_bessel_zero():
    lam1 = bessel_zeros(0, 1)[0] ** 2
    coarse = generalized_min_eigenvalue(assemble(build_mesh(20, 20)))
    fine = generalized_min_eigenvalue(assemble(build_mesh(70, 70)))
    assert abs(fine - lam1) <= 0.01 * lam1
    assert abs(fine - lam1) < abs(coarse - lam1)


def test_point_load_examples():
    mesh = build_mesh(8, 8)
    node = mesh.node_id(3, 2)
    b = point_load(mesh, SourcePoint(mesh.node_r[node], mesh.node_theta[node]))
    np.testing.assert_allclose(b, np.eye(mesh.n_nodes)[node], atol=1e-14)
    b = point_load(mesh, _mid_cell(mesh, 4, 5))
    assert sorted(b[b != 0]) == pytest.approx([0.25] * 4)


def test_point_load_sums_to_one():
    mesh = build_mesh(12, 16)
    rng = np.random.default_rng(1)
    for _ in range(100):
        b = point_load(mesh, SourcePoint(0.99 * rng.random() + 0.001, 2 * math.pi * rng.random()))
        assert b.sum() == pytest.approx(1.0, abs=1e-14)


def test_point_load_rejects_origin():
    with pytest.raises(ValueError):
        point_load(build_mesh(4, 8), SourcePoint(0.0, 0.0))


def test_derivative_load_properties():
    mesh = build_mesh(10, 12)
    src = _mid_cell(mesh, 4, 3)
    for wrt in ("r", "theta"):
        assert abs(derivative_load(mesh, src, wrt).sum()) <= 1e-12
    h = 1e-6
    fd = (point_load(mesh, SourcePoint(src.r_star + h, src.theta_star))
          - point_load(mesh, SourcePoint(src.r_star - h, src.theta_star))) / (2 * h)
    np.testing.assert_allclose(derivative_load(mesh, src, "r"), fd, atol=1e-5)

    # antisymmetry across the theta mid-line: corners 1<->4 and 2<->3
    elem = mesh.element_id(4, 3)
    g = derivative_load(mesh, src, "theta")[mesh.elements[elem]]
    assert g[0] == pytest.approx(-g[3]) and g[1] == pytest.approx(-g[2])


def test_derivative_load_edge_error():
    mesh = build_mesh(10, 12)
    with pytest.raises(EdgeProximityError) as info:
        derivative_load(mesh, SourcePoint(0.5, 0.3), "r")
    assert info.value.suggested[0] > 0
    with pytest.raises(ValueError):
        derivative_load(mesh, _mid_cell(mesh, 2, 2), "phi")


def test_single_step_is_nonnegative():
    system = assemble(build_mesh(8, 8))
    hist = solve_forward(system, SourcePoint(0.4, 2.0), 1, 0.1)
    assert np.all(hist.values[0] == 0.0)
    b = point_load(system.mesh, SourcePoint(0.4, 2.0))[system.mesh.free]
    a = (system.mass + 0.1 * system.stiffness).toarray()
    np.testing.assert_allclose(hist.values[1], 0.1 * np.linalg.solve(a, b), rtol=1e-10, atol=1e-14)
    assert np.all(hist.values[1] >= -1e-15)


def test_long_run_reaches_stationary(sys20):
    src = SourcePoint(0.4, 2.0)
    hist = solve_forward(sys20, src, 2000, 10.0)
    steady = solve_stationary(sys20, src)
    assert np.linalg.norm(hist.values[-1] - steady) <= 1e-4 * np.linalg.norm(steady)


def test_boundary_flux_examples():
    mesh = build_mesh(10, 14)
    assert boundary_flux(mesh, np.zeros(mesh.n_nodes), 1.0) == 0.0
    ramp = mesh.interpolate(lambda r, t: 1.0 - r)
    for theta in (0.0, 0.77, 3.0, 6.2):
        assert boundary_flux(mesh, ramp, theta) == pytest.approx(-1.0, abs=1e-12)
        assert boundary_flux(mesh, ramp[mesh.free], theta) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        boundary_flux(mesh, np.zeros(3), 0.0)


@pytest.mark.xfail(strict=True, reason="consistent-mass bilinear elements undershoot in early steps on coarse polar meshes")
def test_maximum_principle_coarse(sys20):
    hist = solve_forward(sys20, SourcePoint(0.7, 1.0), 500, 1.0)
    assert hist.values.min() >= -1e-12
    for theta in np.linspace(0.0, 2 * math.pi, 50, endpoint=False):
        assert np.max(boundary_flux(sys20.mesh, hist.values, theta)) <= 1e-10


def test_undershoot_shrinks_and_flux_sign_holds_on_fine_mesh():
    src = SourcePoint(0.7, 1.0)
    under = []
    for m in (20, 40, 70):
        system = assemble(build_mesh(m, m))
        hist = solve_forward(system, src, 500, 1.0)
        under.append(-hist.values.min() / hist.values.max())
    assert under[0] > under[1] > under[2]
    for theta in np.linspace(0.0, 2 * math.pi, 50, endpoint=False):
        assert np.max(boundary_flux(system.mesh, hist.values, theta)) <= 1e-10


def test_conservation_at_steady_state(sys40):
    u = solve_stationary(sys40, SourcePoint(0.4, 2.0))
    assert abs(flux_integral(sys40.mesh, u) + 1.0) <= 0.02


def test_cross_solver_at_final_time():
    system = assemble(build_mesh(70, 70))
    src = SourcePoint(0.4, 2.0)
    hist = solve_forward(system, src, 500, 1.0)
    fem = boundary_flux(system.mesh, hist.values[-1], 2.0)
    ref = flux_trace(src, 2.0, [1.0]).values[0]
    assert abs(fem - ref) <= 0.05 * abs(ref)


def test_flux_response_matches_march(sys20):
    src = SourcePoint(0.43, 2.07)
    angles = (0.3, 2.0)
    h = flux_response(sys20, angles, 50, 1.0)
    assert h.shape == (2, 50, sys20.mesh.n_free)
    hist = solve_forward(sys20, src, 50, 1.0)
    load = point_load(sys20.mesh, src)[sys20.mesh.free]
    for a, theta in enumerate(angles):
        np.testing.assert_allclose(h[a] @ load, boundary_flux(sys20.mesh, hist.values[1:], theta), atol=1e-13)


def test_sensitivity_matches_finite_differences(sys40):
    mesh = sys40.mesh
    src = SourcePoint(0.4 + 0.3 * mesh.h_r, 2.0 + 0.3 * mesh.h_theta)
    d, h = 100, 1e-4
    sens = boundary_flux(mesh, solve_sensitivity(sys40, src, "r", d, 1.0).values[1:], 0.3)
    plus = boundary_flux(mesh, solve_forward(sys40, SourcePoint(src.r_star + h, src.theta_star), d, 1.0).values[1:], 0.3)
    minus = boundary_flux(mesh, solve_forward(sys40, SourcePoint(src.r_star - h, src.theta_star), d, 1.0).values[1:], 0.3)
    fd = (plus - minus) / (2 * h)
    assert np.linalg.norm(sens - fd) <= 1e-3 * np.linalg.norm(fd)
    assert np.all(solve_sensitivity(sys40, src, "theta", d, 1.0).values[0] == 0.0)


def test_theta_sensitivity_vanishes_when_aligned(sys40):
    src = _mid_cell(sys40.mesh, 16, 13)
    d = 100
    s_theta = boundary_flux(sys40.mesh, solve_sensitivity(sys40, src, "theta", d, 1.0).values[1:], src.theta_star)
    s_r = boundary_flux(sys40.mesh, solve_sensitivity(sys40, src, "r", d, 1.0).values[1:], src.theta_star)
    assert np.max(np.abs(s_theta)) <= 1e-3 * np.max(np.abs(s_r))


def test_iterative_fallback_agrees_with_direct():
    mesh = build_mesh(12, 16)
    src = SourcePoint(0.41, 2.03)
    direct = solve_forward(assemble(mesh), src, 20, 1.0).values
    iterative = solve_forward(assemble(mesh, direct_limit=0), src, 20, 1.0).values
    np.testing.assert_allclose(iterative, direct, rtol=1e-7, atol=1e-10)


def test_bad_step_arguments(sys20):
    with pytest.raises(ValueError):
        solve_forward(sys20, SourcePoint(0.4, 2.0), 0, 1.0)
    with pytest.raises(ValueError):
        solve_forward(sys20, SourcePoint(0.4, 2.0), 10, -1.0)
