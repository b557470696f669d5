"""Periodic polar quadrilateral mesh of the unit disc.

Cells are the tensor-product boxes ``[r_i, r_{i+1}] x [theta_j, theta_{j+1}]``
of a uniform ``(r, theta)`` grid. The last angular column wraps onto the
nodes of the first, and all nodes at ``r = 0`` are merged into a single
origin node, so the innermost ring consists of quadrilaterals whose inner
edge is collapsed.

Node numbering: the origin is node 0, ring ``i >= 1`` column ``j`` is node
``1 + (i - 1) * n_theta + j``. Element ``(i, j)`` has id ``i * n_theta + j``
and corners ordered like the reference nodes (-1,-1), (1,-1), (1,1), (-1,1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI, PolarPoint

# reference-square corners, in the order of the shape functions
CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    m_r: int
    n_theta: int
    elements: np.ndarray  # (n_elements, 4) node ids
    node_r: np.ndarray
    node_theta: np.ndarray
    boundary: np.ndarray
    free: np.ndarray
    free_index: np.ndarray  # node id -> position among unknowns, -1 on the boundary

    origin: int = 0

    @property
    def h_r(self) -> float:
        return 1.0 / self.m_r

    @property
    def h_theta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def n_nodes(self) -> int:
        return self.node_r.size

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_free(self) -> int:
        return self.free.size

    def node_id(self, i: int, j: int) -> int:
        if i == 0:
            return self.origin
        return 1 + (i - 1) * self.n_theta + (j % self.n_theta)

    def element_id(self, i: int, j: int) -> int:
        return i * self.n_theta + (j % self.n_theta)

    def element_ij(self, elem: int) -> tuple[int, int]:
        return divmod(int(elem), self.n_theta)

    def cell_bounds(self, elem: int) -> tuple[float, float, float, float]:
        """``(r_lo, r_hi, theta_lo, theta_hi)``; theta_hi reaches 2*pi on the last column."""
        i, j = self.element_ij(elem)
        return i * self.h_r, (i + 1) * self.h_r, j * self.h_theta, (j + 1) * self.h_theta

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Nodal vector over all nodes from values on the unknowns (boundary = 0)."""
        full = np.zeros(self.n_nodes)
        full[self.free] = values
        return full

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(r, theta)`` over all nodes."""
        return np.array([func(r, t) for r, t in zip(self.node_r, self.node_theta)], dtype=float)


def build_mesh(m_r: int, n_theta: int) -> Mesh:
    if m_r < 2 or n_theta < 4:
        raise ValueError(f"need m_r >= 2 and n_theta >= 4, got ({m_r}, {n_theta})")
    n_nodes = m_r * n_theta + 1
    ring, col = np.divmod(np.arange(n_nodes - 1), n_theta)
    node_r = np.r_[0.0, (ring + 1) / m_r]
    node_theta = np.r_[0.0, col * (TWO_PI / n_theta)]

    i, j = np.divmod(np.arange(m_r * n_theta), n_theta)
    jn = (j + 1) % n_theta

    def nid(ii, jj):
        return np.where(ii == 0, 0, 1 + (ii - 1) * n_theta + jj)

    elements = np.stack([nid(i, j), nid(i + 1, j), nid(i + 1, jn), nid(i, jn)], axis=1)
    boundary = 1 + (m_r - 1) * n_theta + np.arange(n_theta)
    free = np.arange(boundary[0])
    free_index = np.full(n_nodes, -1)
    free_index[free] = np.arange(free.size)
    return Mesh(m_r, n_theta, elements, node_r, node_theta, boundary, free, free_index)


def shape(xi, eta) -> np.ndarray:
    """Bilinear shape functions N1..N4; the last axis has length 4."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return 0.25 * np.stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)], axis=-1
    )


def shape_grad(xi, eta) -> np.ndarray:
    """Reference gradients; shape ``(..., 4, 2)`` with columns d/dxi, d/deta."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    deta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return np.stack([dxi, deta], axis=-1)


def locate(mesh: Mesh, p: PolarPoint) -> tuple[int, float, float]:
    """Element containing ``p`` and the reference coordinates of ``p`` in it.

    Points on a shared edge or corner go to the lowest element id.
    """
    if p.r >= 1.0:
        raise OutOfDomainError(f"point at r={p.r} is not interior")
    i = min(max(math.ceil(p.r * mesh.m_r) - 1, 0), mesh.m_r - 1)
    j = min(max(math.ceil(p.theta / mesh.h_theta) - 1, 0), mesh.n_theta - 1)
    xi = 2.0 * (p.r - i * mesh.h_r) / mesh.h_r - 1.0
    eta = 2.0 * (p.theta - j * mesh.h_theta) / mesh.h_theta - 1.0
    return mesh.element_id(i, j), xi, eta


def isoparametric(mesh: Mesh, elem: int, xi: float, eta: float) -> PolarPoint:
    """Map reference coordinates in ``elem`` back to a polar point."""
    r0, r1, t0, t1 = mesh.cell_bounds(elem)
    n = shape(xi, eta)
    r = n @ np.array([r0, r1, r1, r0])
    theta = n @ np.array([t0, t0, t1, t1])
    return PolarPoint(min(max(float(r), 0.0), 1.0), float(theta))


GAUSS3_POINTS, GAUSS3_WEIGHTS = np.polynomial.legendre.leggauss(3)


def element_areas(mesh: Mesh) -> np.ndarray:
    """Area of every element from 3x3 Gauss quadrature of ``r dr dtheta``."""
    xi, eta = np.meshgrid(GAUSS3_POINTS, GAUSS3_POINTS, indexing="ij")
    w = np.outer(GAUSS3_WEIGHTS, GAUSS3_WEIGHTS)
    det = 0.25 * mesh.h_r * mesh.h_theta
    ring = np.arange(mesh.n_elements) // mesh.n_theta
    r_lo = ring * mesh.h_r
    r_q = r_lo[:, None, None] + 0.5 * (xi[None] + 1.0) * mesh.h_r
    return np.sum(w[None] * r_q, axis=(1, 2)) * det
