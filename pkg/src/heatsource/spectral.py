"""Analytic boundary flux of the disc heat equation with a unit point source.

The flux at boundary angle ``theta_z`` is the eigenfunction series

    sum_n a_n e^{-i m_n theta_z} (1 - e^{-lambda_n t}),
    a_n = -pi^{-1/2} lambda_n^{-1/2} omega_n J_|m|(sqrt(lambda_n) r*) e^{i m_n theta*}.

At fixed ``t`` the raw series converges slowly, so it is evaluated as the
closed-form steady state (the Poisson-kernel flux) minus the exponentially
damped transient. The transient is cut at the eigenvalue ``Lambda`` where

    Lambda^{-1/4} e^{-Lambda t} (Lambda / 4 + 1 / (4 t))

drops below the requested tolerance. That bound follows from the
coefficient envelope ``|a_n| <= lambda_n^{-1/4}`` (checked by the tests over
the whole mode budget) and Polya's inequality ``N(lambda) <= lambda / 4`` for
the disc eigenvalue counting function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bessel import EigenMode, bessel_j, bessel_jn_pair, zeros_below
from .geometry import PolarPoint, SourcePoint, wrap_angle

SQRT_PI = math.sqrt(math.pi)
# largest sqrt(lambda) the transient sum may use; about 400 orders x 130 radial indices
MAX_SQRT_LAMBDA = 400.0


class SeriesBudgetError(RuntimeError):
    """The requested tolerance needs more modes than the budget allows."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class FluxCoefficient:
    mode: EigenMode
    a_r: float
    a_s: complex


@dataclass(frozen=True, eq=False)
class FluxTrace:
    """Boundary flux samples at one observation angle."""

    theta_obs: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have the same shape")
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


def flux_coefficients(source: SourcePoint, modes: list[EigenMode]) -> list[FluxCoefficient]:
    if not modes:
        raise ValueError("need at least one mode")
    orders = np.array([md.order for md in modes])
    roots = np.array([md.sqrt_lambda for md in modes])
    omegas = np.array([md.omega for md in modes])
    radial = bessel_j(orders, roots * source.r_star)
    a_r = -omegas * radial / (SQRT_PI * roots)
    out = []
    for md, a in zip(modes, a_r):
        phase = md.m * source.theta_star
        out.append(FluxCoefficient(md, float(a), complex(a * math.cos(phase), a * math.sin(phase))))
    return out


def steady_flux(source: SourcePoint, theta_obs: float) -> float:
    """Large-time flux: the normal derivative of the disc Green's function."""
    r = source.r_star
    dist2 = 1.0 - 2.0 * r * math.cos(theta_obs - source.theta_star) + r * r
    return -(1.0 - r * r) / (2.0 * math.pi * dist2)


def tail_bound(lam_cut: float, t: float) -> float:
    """Bound on the transient terms with eigenvalue above ``lam_cut``."""
    return lam_cut**-0.25 * math.exp(-lam_cut * t) * (0.25 * lam_cut + 0.25 / t)


def small_time_bound(source: SourcePoint, theta_obs: float, t: float) -> float:
    """Bound on ``|flux|`` at time ``t`` from the tangent half-plane.

    The disc lies inside the half-plane tangent at the observation point, so
    its Dirichlet heat kernel is dominated there and both vanish on the
    boundary point; the half-plane exit density integrates in closed form to
    ``a exp(-rho^2 / 4t) / (pi rho^2)`` with ``a`` the source's distance to
    the tangent line and ``rho`` its distance to the observation point.
    """
    r = source.r_star
    c = math.cos(theta_obs - source.theta_star)
    rho2 = 1.0 - 2.0 * r * c + r * r
    return (1.0 - r * c) * math.exp(-rho2 / (4.0 * t)) / (math.pi * rho2)


def transient_cutoff(t: float, tol: float) -> float:
    """Smallest sqrt(Lambda) on a 1/8 grid whose tail bound is below ``tol``."""
    if t <= 0.0 or tol <= 0.0:
        raise ValueError("need t > 0 and tol > 0")
    root = 4.0
    while tail_bound(root * root, t) >= tol:
        root *= 1.25
        if root > MAX_SQRT_LAMBDA:
            achieved = tail_bound(MAX_SQRT_LAMBDA**2, t)
            raise SeriesBudgetError(
                f"tolerance {tol:g} at t={t:g} needs sqrt(lambda) > {MAX_SQRT_LAMBDA:g}; "
                f"best achievable bound {achieved:.3g}",
                achieved,
            )
    return math.ceil(root * 8.0) / 8.0


@dataclass(frozen=True, eq=False)
class _ModeSet:
    """Modes with m >= 0 and their source-dependent radial coefficients."""

    order: np.ndarray
    lam: np.ndarray
    a_r: np.ndarray
    weight: np.ndarray = field(repr=False)


def _modes_for(source: SourcePoint, root_max: float) -> _ModeSet:
    m, _, j = zeros_below(root_max)
    _, jnext = bessel_jn_pair(m, j)
    radial = bessel_j(m, j * source.r_star)
    a_r = -radial / (math.pi * j * jnext)
    weight = np.where(m == 0, 1.0, 2.0)
    return _ModeSet(m, j * j, a_r, weight)


def _transient(modes: _ModeSet, source: SourcePoint, theta_obs: float, times: np.ndarray) -> np.ndarray:
    # the +m and -m terms pair into a real cosine
    angular = modes.weight * modes.a_r * np.cos(modes.order * (theta_obs - source.theta_star))
    return np.exp(-np.outer(times, modes.lam)) @ angular


def flux_trace(source: SourcePoint, theta_obs: float, times, tol: float = 1e-12) -> FluxTrace:
    """Flux samples at every time in ``times`` (t = 0 gives exactly 0).

    Times whose :func:`small_time_bound` is below ``tol`` return 0; the rest
    use the closed-form steady state minus the truncated transient.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0.0):
        raise ValueError("times must be non-negative")
    values = np.zeros_like(times)
    # exponentially small early samples are 0 to within tol
    positive = np.array([t > 0.0 and small_time_bound(source, theta_obs, t) >= tol for t in times], dtype=bool)
    if positive.any():
        root = transient_cutoff(float(times[positive].min()), tol)
        modes = _modes_for(source, root)
        steady = steady_flux(source, theta_obs)
        values[positive] = steady - _transient(modes, source, theta_obs, times[positive])
    return FluxTrace(wrap_angle(theta_obs), times, values)


def flux(source: SourcePoint, theta_obs: float, t: float, tol: float = 1e-12) -> float:
    """Boundary flux at angle ``theta_obs`` and time ``t`` to absolute accuracy ``tol``."""
    if t < 0.0:
        raise ValueError("t must be non-negative")
    if t == 0.0:
        return 0.0
    return float(flux_trace(source, theta_obs, [t], tol).values[0])


def series_sum(coefficients: list[FluxCoefficient], theta_obs: float, t: float | None = None) -> complex:
    """Direct complex partial sum over signed modes.

    With ``t=None`` this is the steady-state sum ``sum a_s e^{-i m theta_z}``.
    Used for validation; the production path is :func:`flux`.
    """
    total = 0j
    for c in coefficients:
        factor = 1.0 if t is None else -math.expm1(-c.mode.lam * t)
        phase = -c.mode.m * theta_obs
        total += c.a_s * complex(math.cos(phase), math.sin(phase)) * factor
    return total


def eval_eta(z_angle: float, n: int, point: PolarPoint) -> complex:
    """Partial sum of the harmonic family concentrating at boundary angle ``z_angle``."""
    if n < 0:
        raise ValueError("N must be non-negative")
    ell = np.arange(-n, n + 1)
    terms = point.r ** np.abs(ell) * np.exp(1j * ell * (z_angle - point.theta))
    return complex(terms.sum() / (2.0 * math.pi))


def eval_w(z_angle: float, n: int, point: PolarPoint, t: float, tol: float = 1e-12) -> complex:
    """Heat solution with zero initial data and boundary values ``eta``.

    Evaluated as the harmonic limit ``eta`` minus the decaying modes with
    ``|m| <= N``, the radial index cut by the same tail bound as :func:`flux`.
    """
    if t < 0.0:
        raise ValueError("t must be non-negative")
    if t == 0.0:
        return 0j
    root = transient_cutoff(t, tol)
    m, _, j = zeros_below(root)
    keep = m <= n
    m, j = m[keep], j[keep]
    _, jnext = bessel_jn_pair(m, j)
    omega = 1.0 / (SQRT_PI * jnext)
    radial = omega * bessel_j(m, j * point.r)
    coef = radial * np.exp(-j * j * t) / (SQRT_PI * j)
    # +m and -m modes: e^{-i m theta_z} e^{i m theta} + conjugate
    phase = np.exp(1j * m * (point.theta - z_angle))
    pair = np.where(m == 0, phase, phase + np.conj(phase))
    return eval_eta(z_angle, n, point) - complex(np.sum(coef * pair))


@dataclass(frozen=True)
class Admissibility:
    status: str  # "admissible" | "inadmissible" | "unresolved"
    p: int | None = None
    q: int | None = None
    clearance: float = math.inf


MATCH_TOL = 1e-12
CLEARANCE_TOL = 1e-6


def _convergents(x: float, q_max: int):
    p0, q0, p1, q1 = 0, 1, 1, 0
    rest = x
    while True:
        a = math.floor(rest)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > q_max:
            return
        yield p1, q1
        frac = rest - a
        if frac < 1e-15:
            return
        rest = 1.0 / frac


def check_observation_angles(theta_1: float, theta_2: float, q_max: int = 10_000) -> Admissibility:
    """Heuristic test of ``theta_1 - theta_2`` against rational multiples of pi.

    For each continued-fraction convergent ``p/q`` (``q <= q_max``) of
    ``(theta_1 - theta_2)/pi`` the clearance ``|q x - p|`` is computed; it is
    proportional to ``|sin(q (theta_1 - theta_2))|``, the determinant that
    separates the +q and -q modes. A clearance below 1e-12 is a rational
    match, above 1e-6 for every convergent is admissible, anything in
    between is reported as unresolved.
    """
    if q_max < 1:
        raise ValueError("q_max must be at least 1")
    x = (theta_1 - theta_2) / math.pi
    best = math.inf
    for p, q in _convergents(x, q_max):
        gap = abs(q * x - p)
        if gap <= MATCH_TOL:
            frac = Fraction(p, q)
            return Admissibility("inadmissible", frac.numerator, frac.denominator, gap)
        best = min(best, gap)
    if best > CLEARANCE_TOL:
        return Admissibility("admissible", clearance=best)
    return Admissibility("unresolved", clearance=best)


def trace_distance(a: SourcePoint, b: SourcePoint, angles, d: int = 500, horizon: float = 1.0) -> float:
    """Discrete L2-in-time distance between the flux traces of two sources."""
    times = horizon * np.arange(1, d + 1) / d
    total = 0.0
    for theta in angles:
        diff = flux_trace(a, theta, times).values - flux_trace(b, theta, times).values
        total += horizon / d * float(np.sum(diff * diff))
    return math.sqrt(total)
