"""Bilinear finite elements in polar coordinates with backward Euler in time.

The semi-discrete problem is ``M u' + K u = b`` with

    M_ab = int N_a N_b r dr dtheta,
    K_ab = int (r dN_a/dr dN_b/dr + (1/r) dN_a/dtheta dN_b/dtheta) dr dtheta,

and ``b`` the point evaluation of the test functions at the source. Each
step solves ``(M + dt K) u^{k+1} = M u^k + dt b`` on the interior unknowns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import PolarPoint, SourcePoint
from .mesh import GAUSS3_POINTS, GAUSS3_WEIGHTS, Mesh, locate, shape, shape_grad

EDGE_TOL = 1e-10
# above this many unknowns the step matrix is not factorised; PCG is used instead
DIRECT_LIMIT = 250_000
CG_RTOL = 1e-10


class SolverError(RuntimeError):
    pass


class EdgeProximityError(ValueError):
    """The source sits on an element edge, where the derivative load jumps."""

    def __init__(self, message: str, suggested: tuple[float, float]):
        super().__init__(message)
        self.suggested = suggested


def _ring_matrices(mesh: Mesh, stiffness_sign: float) -> tuple[np.ndarray, np.ndarray]:
    """Element mass and stiffness for every radial ring, shape (m_r, 4, 4)."""
    xi, eta = np.meshgrid(GAUSS3_POINTS, GAUSS3_POINTS, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    w = np.outer(GAUSS3_WEIGHTS, GAUSS3_WEIGHTS).ravel()
    n = shape(xi, eta)  # (9, 4)
    g = shape_grad(xi, eta)  # (9, 4, 2)
    hr, ht = mesh.h_r, mesh.h_theta
    dr = g[..., 0] * (2.0 / hr)
    dt = g[..., 1] * (2.0 / ht)
    det = 0.25 * hr * ht
    mass = np.empty((mesh.m_r, 4, 4))
    stiff = np.empty((mesh.m_r, 4, 4))
    for i in range(mesh.m_r):
        r = i * hr + 0.5 * (xi + 1.0) * hr
        wq = w * det
        mass[i] = np.einsum("q,qa,qb->ab", wq * r, n, n)
        stiff[i] = np.einsum("q,qa,qb->ab", wq * r, dr, dr) + np.einsum("q,qa,qb->ab", wq / r, dt, dt)
    return mass, stiffness_sign * stiff


def _assemble_full(mesh: Mesh, ring_mats: np.ndarray) -> sp.csr_matrix:
    ring = np.arange(mesh.n_elements) // mesh.n_theta
    rows = np.repeat(mesh.elements, 4, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 4)).ravel()
    vals = ring_mats[ring].reshape(mesh.n_elements, 16).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()


class _StepSolver:
    """Solves ``A x = rhs`` for the fixed step matrix ``A = M + dt K``."""

    def __init__(self, a: sp.csc_matrix, direct: bool):
        self.a = a
        self.n = a.shape[0]
        self.lu = None
        if direct:
            try:
                self.lu = spla.splu(a)
            except RuntimeError as exc:  # singular factor
                raise SolverError(f"factorisation of the step matrix failed: {exc}") from exc
        else:
            self.precond = sp.diags(1.0 / a.diagonal())

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        if self.lu is not None:
            return self.lu.solve(rhs)
        x, info = spla.cg(self.a, rhs, rtol=CG_RTOL, atol=0.0, maxiter=10 * self.n, M=self.precond)
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
        return x


@dataclass(eq=False)
class AssembledSystem:
    mesh: Mesh
    mass_full: sp.csr_matrix
    stiffness_full: sp.csr_matrix
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    direct_limit: int = DIRECT_LIMIT
    _solvers: dict = field(default_factory=dict, repr=False)

    def step_solver(self, dt: float) -> _StepSolver:
        """Cached solver for ``M + dt K`` (factorised once per time step size)."""
        key = float(dt)
        if key not in self._solvers:
            a = (self.mass + dt * self.stiffness).tocsc()
            self._solvers[key] = _StepSolver(a, direct=self.mesh.n_free <= self.direct_limit)
        return self._solvers[key]

    def stationary_solver(self) -> _StepSolver:
        key = "stationary"
        if key not in self._solvers:
            self._solvers[key] = _StepSolver(self.stiffness.tocsc(), direct=True)
        return self._solvers[key]


def assemble(mesh: Mesh, stiffness_sign: float = 1.0, direct_limit: int = DIRECT_LIMIT) -> AssembledSystem:
    """Mass and stiffness matrices; ``stiffness_sign`` exists for fault injection only."""
    mass_e, stiff_e = _ring_matrices(mesh, stiffness_sign)
    m_full = _assemble_full(mesh, mass_e)
    k_full = _assemble_full(mesh, stiff_e)
    f = mesh.free
    return AssembledSystem(
        mesh, m_full, k_full, m_full[f][:, f].tocsr(), k_full[f][:, f].tocsr(), direct_limit=direct_limit
    )


def _check_source(mesh: Mesh, source: SourcePoint):
    if not (0.0 < source.r_star < 1.0):
        raise ValueError(f"source radius {source.r_star} must be strictly inside (0, 1)")


def point_load(mesh: Mesh, source: SourcePoint) -> np.ndarray:
    """Load vector over all nodes: the shape functions evaluated at the source."""
    _check_source(mesh, source)
    elem, xi, eta = locate(mesh, source.point)
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.elements[elem], shape(xi, eta))
    return b


def _edge_check(mesh: Mesh, source: SourcePoint, elem: int):
    r0, r1, t0, t1 = mesh.cell_bounds(elem)
    r, t = source.r_star, source.theta_star
    near_r = min(r - r0, r1 - r) < EDGE_TOL
    near_t = min(t - t0, t1 - t) < EDGE_TOL
    if near_r or near_t:
        nudge = (0.01 * mesh.h_r if near_r else 0.0, 0.01 * mesh.h_theta if near_t else 0.0)
        raise EdgeProximityError(
            f"source ({r}, {t}) lies on an edge of element {elem}; perturb it by about {nudge}", nudge
        )


def derivative_load(mesh: Mesh, source: SourcePoint, wrt: str) -> np.ndarray:
    """Derivative of :func:`point_load` with respect to ``r`` or ``theta`` of the source."""
    if wrt not in ("r", "theta"):
        raise ValueError("wrt must be 'r' or 'theta'")
    _check_source(mesh, source)
    elem, xi, eta = locate(mesh, source.point)
    _edge_check(mesh, source, elem)
    g = shape_grad(xi, eta)
    vals = g[:, 0] * (2.0 / mesh.h_r) if wrt == "r" else g[:, 1] * (2.0 / mesh.h_theta)
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.elements[elem], vals)
    return b


@dataclass(frozen=True, eq=False)
class FieldHistory:
    """Nodal values on the unknowns at ``times`` (row 0 is the initial state)."""

    times: np.ndarray
    values: np.ndarray
    source: SourcePoint


def _march(system: AssembledSystem, load: np.ndarray, d: int, horizon: float) -> np.ndarray:
    if d < 1 or horizon <= 0.0:
        raise ValueError("need d >= 1 and T > 0")
    dt = horizon / d
    solve = system.step_solver(dt)
    rhs_load = dt * load[system.mesh.free]
    out = np.zeros((d + 1, system.mesh.n_free))
    for k in range(d):
        out[k + 1] = solve(system.mass @ out[k] + rhs_load)
    return out


def solve_forward(system: AssembledSystem, source: SourcePoint, d: int, horizon: float) -> FieldHistory:
    values = _march(system, point_load(system.mesh, source), d, horizon)
    return FieldHistory(horizon * np.arange(d + 1) / d, values, source)


def solve_sensitivity(
    system: AssembledSystem, source: SourcePoint, wrt: str, d: int, horizon: float
) -> FieldHistory:
    """Derivative of the forward field with respect to one source coordinate."""
    values = _march(system, derivative_load(system.mesh, source, wrt), d, horizon)
    return FieldHistory(horizon * np.arange(d + 1) / d, values, source)


def solve_stationary(system: AssembledSystem, source: SourcePoint) -> np.ndarray:
    """Steady state ``K u = b`` on the unknowns."""
    return system.stationary_solver()(point_load(system.mesh, source)[system.mesh.free])


def flux_functional(mesh: Mesh, theta_obs: float) -> np.ndarray:
    """Vector ``g`` over all nodes with ``g . u`` = radial derivative at (1, theta_obs).

    The derivative comes from the shape functions of the outermost element
    containing the observation angle, evaluated at ``xi = 1``.
    """
    theta = PolarPoint(1.0, theta_obs).theta
    j = min(max(math.ceil(theta / mesh.h_theta) - 1, 0), mesh.n_theta - 1)
    eta = 2.0 * (theta - j * mesh.h_theta) / mesh.h_theta - 1.0
    elem = mesh.element_id(mesh.m_r - 1, j)
    g = np.zeros(mesh.n_nodes)
    np.add.at(g, mesh.elements[elem], shape_grad(1.0, eta)[:, 0] * (2.0 / mesh.h_r))
    return g


def boundary_flux(mesh: Mesh, field: np.ndarray, theta_obs: float) -> float:
    """Outward normal derivative of a nodal field at boundary angle ``theta_obs``.

    ``field`` may hold values on all nodes or only on the unknowns.
    """
    g = flux_functional(mesh, theta_obs)
    if field.shape[-1] == mesh.n_free:
        g = g[mesh.free]
    elif field.shape[-1] != mesh.n_nodes:
        raise ValueError("field length matches neither the node count nor the unknown count")
    return float(g @ field) if field.ndim == 1 else field @ g


def flux_response(system: AssembledSystem, angles, d: int, horizon: float) -> np.ndarray:
    """Linear map from a load vector (on the unknowns) to flux traces.

    Returns ``H`` with shape ``(len(angles), d, n_free)`` such that the flux at
    angle ``a`` and time ``t_k = k T / d`` (k = 1..d) of the backward Euler
    solution driven by load ``b`` equals ``H[a, k - 1] @ b``. Built by running
    the step recursion on the flux functional (A and M are symmetric), so
    every forward or sensitivity trace afterwards costs one small product.
    """
    dt = horizon / d
    solve = system.step_solver(dt)
    mesh = system.mesh
    out = np.empty((len(angles), d, mesh.n_free))
    for a, theta in enumerate(angles):
        y = solve(flux_functional(mesh, theta)[mesh.free])
        acc = np.zeros(mesh.n_free)
        for k in range(d):
            acc = acc + dt * y
            out[a, k] = acc
            y = solve(system.mass @ y)
    return out


def generalized_min_eigenvalue(system: AssembledSystem) -> float:
    """Smallest eigenvalue of ``K x = lambda M x`` on the unknowns."""
    vals = spla.eigsh(system.stiffness.tocsc(), k=1, M=system.mass.tocsc(), sigma=0.0, which="LM")[0]
    return float(vals[0])


def flux_integral(mesh: Mesh, field: np.ndarray) -> float:
    """Trapezoid integral of the boundary flux over the node angles."""
    angles = np.arange(mesh.n_theta) * mesh.h_theta
    return float(sum(boundary_flux(mesh, field, t) for t in angles) * mesh.h_theta)
