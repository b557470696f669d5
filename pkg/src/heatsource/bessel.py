"""Integer-order Bessel functions of the first kind and the Dirichlet
eigensystem of the Laplacian on the unit disc.

Evaluation uses the ascending series for small arguments and Miller's
backward recurrence, normalised by the Neumann sum
``J_0 + 2 * sum J_2k = 1``, everywhere else. Zeros are bracketed by a sign
scan of all orders at once and polished with a safeguarded Newton iteration
started from McMahon's asymptotic guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .geometry import PolarPoint

# Below this argument the ascending series loses fewer than two digits to
# cancellation; above it the recurrence takes over.
SERIES_SPLIT = 8.0
X_MAX = 1.0e4
_SERIES_TERMS = 64
_RESCALE = 1.0e250
_MAX_NEWTON = 100


class BesselConvergenceError(RuntimeError):
    pass


def _check_domain(m, x):
    if np.any(m < 0):
        raise ValueError("Bessel order must be non-negative (use J_-m = (-1)^m J_m)")
    if np.any(~np.isfinite(x)) or np.any(x < 0.0):
        raise ValueError("Bessel argument must be finite and non-negative")
    if np.any(x > X_MAX):
        raise ValueError(f"Bessel argument above supported range {X_MAX:g}")


def _series_pair(m: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = []
    q = -0.25 * x * x
    for order in (m, m + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            logpre = order * np.log(0.5 * x) - gammaln(order + 1.0)
        term = np.where(x > 0.0, np.exp(logpre), np.where(order == 0, 1.0, 0.0))
        total = term.copy()
        for k in range(1, _SERIES_TERMS):
            term = term * q / (k * (order + k))
            total += term
        out.append(total)
    return out[0], out[1]


def _start_order(top: np.ndarray, x: np.ndarray) -> int:
    n = int(np.max(np.maximum(top, x) + 30.0 + 15.0 * np.cbrt(x))) + 2
    return n + (n % 2)


def _miller_pair(m: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_start = _start_order(m + 1.0, x)
    jp1 = np.zeros_like(x)
    jk = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    j_m = np.zeros_like(x)
    j_m1 = np.zeros_like(x)
    two_over_x = 2.0 / x
    m_top = int(m.max()) + 1
    for k in range(n_start, 0, -1):
        jkm1 = k * two_over_x * jk - jp1
        order = k - 1
        if order == 0:
            norm += jkm1
        elif order % 2 == 0:
            norm += 2.0 * jkm1
        if order <= m_top:
            hit = m == order
            if hit.any():
                j_m = np.where(hit, jkm1, j_m)
            hit = m + 1 == order
            if hit.any():
                j_m1 = np.where(hit, jkm1, j_m1)
        jp1, jk = jk, jkm1
        big = np.abs(jk) > _RESCALE
        if big.any():
            s = np.where(big, 1.0 / _RESCALE, 1.0)
            jk *= s
            jp1 *= s
            norm *= s
            j_m *= s
            j_m1 *= s
    return j_m / norm, j_m1 / norm


def bessel_table(m_max: int, x) -> np.ndarray:
    """J_0 .. J_{m_max} at every ``x``; shape ``(m_max + 1, len(x))``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_domain(np.zeros(1), x)
    table = np.zeros((m_max + 1, x.size))
    small = x < SERIES_SPLIT
    if small.any():
        orders = np.arange(m_max + 1)[:, None]
        table[:, small] = _series_pair(orders, np.broadcast_to(x[small], (m_max + 1, small.sum())))[0]
    xs = x[~small]
    if xs.size:
        n_start = _start_order(np.array([m_max + 1.0]), xs)
        jp1 = np.zeros_like(xs)
        jk = np.full_like(xs, 1e-30)
        norm = np.zeros_like(xs)
        rows = np.zeros((m_max + 1, xs.size))
        two_over_x = 2.0 / xs
        for k in range(n_start, 0, -1):
            jkm1 = k * two_over_x * jk - jp1
            order = k - 1
            if order == 0:
                norm += jkm1
            elif order % 2 == 0:
                norm += 2.0 * jkm1
            if order <= m_max:
                rows[order] = jkm1
            jp1, jk = jk, jkm1
            big = np.abs(jk) > _RESCALE
            if big.any():
                s = np.where(big, 1.0 / _RESCALE, 1.0)
                jk *= s
                jp1 *= s
                norm *= s
                rows[order:] *= s
        table[:, ~small] = rows / norm
    return table


def bessel_jn_pair(m, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(J_m(x), J_{m+1}(x))`` elementwise for integer ``m >= 0``."""
    m, x = np.broadcast_arrays(np.asarray(m, dtype=np.int64), np.asarray(x, dtype=float))
    _check_domain(m, x)
    m = m.ravel()
    x = x.ravel()
    shape = np.broadcast_shapes(m.shape, x.shape)
    j0 = np.empty(shape)
    j1 = np.empty(shape)
    small = x < SERIES_SPLIT
    if small.any():
        j0[small], j1[small] = _series_pair(m[small], x[small])
    if (~small).any():
        j0[~small], j1[~small] = _miller_pair(m[~small], x[~small])
    return j0, j1


def bessel_j(m, x):
    """J_m(x) for integer order ``m >= 0`` and ``0 <= x <= 1e4``.

    Accepts scalars or arrays (broadcast); returns a float for scalar input.
    """
    scalar = np.ndim(m) == 0 and np.ndim(x) == 0
    shape = np.broadcast_shapes(np.shape(m), np.shape(x))
    val = bessel_jn_pair(m, x)[0].reshape(shape)
    return float(val) if scalar else val


def _mcmahon(m, k):
    beta = (k + 0.5 * m - 0.25) * math.pi
    return beta - (4.0 * m * m - 1.0) / (8.0 * beta)


def _refine(m: np.ndarray, lo: np.ndarray, hi: np.ndarray, guess: np.ndarray) -> np.ndarray:
    """Safeguarded Newton for zeros of J_m inside sign-changing brackets."""
    lo = lo.copy()
    hi = hi.copy()
    sign_lo = np.sign(bessel_jn_pair(m, lo)[0])
    x = np.where((guess > lo) & (guess < hi), guess, 0.5 * (lo + hi))
    settled = 0
    for _ in range(_MAX_NEWTON):
        jm, jm1 = bessel_jn_pair(m, x)
        left = np.sign(jm) == sign_lo
        lo = np.where(left & (jm != 0.0), x, lo)
        hi = np.where(~left & (jm != 0.0), x, hi)
        slope = (m / x) * jm - jm1
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - jm / slope
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(jm == 0.0, x, np.where(bad, 0.5 * (lo + hi), xn))
        step = np.abs(xn - x)
        x = xn
        if np.all(step <= 4.0 * np.finfo(float).eps * x):
            settled += 1
            if settled >= 2:
                return x
    raise BesselConvergenceError(f"Bessel zeros did not converge in {_MAX_NEWTON} Newton steps")


@lru_cache(maxsize=16)
def _zeros_scan(m_max: int, x_max: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every zero j_{m,k} <= x_max for m <= m_max, sorted by (m, k)."""
    # consecutive zeros of any J_m are more than 2.9 apart, so a cell this
    # narrow holds at most one sign change
    grid = np.arange(0.25, x_max + 0.5, 0.25)
    table = bessel_table(m_max, grid)
    s = np.sign(table)
    order, cell = np.nonzero(s[:, :-1] * s[:, 1:] < 0.0)
    if order.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    k = np.ones_like(order)
    same = np.r_[False, order[1:] == order[:-1]]
    # radial index = running count within each order
    starts = np.flatnonzero(~same)
    counts = np.diff(np.r_[starts, order.size])
    k = np.arange(order.size) - np.repeat(starts, counts) + 1
    z = _refine(order, grid[cell], grid[cell + 1], _mcmahon(order, k))
    keep = z <= x_max
    return order[keep], k[keep], z[keep]


def bessel_zeros(m: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of J_m, strictly increasing."""
    if m < 0:
        raise ValueError("order must be non-negative")
    if count < 1:
        raise ValueError("count must be at least 1")
    return bessel_zero_table(int(m), int(count))[m].copy()


def zeros_below(x_max: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All zeros ``j_{m,k} <= x_max`` with ``m >= 0``, as arrays ``(m, k, j)``.

    The underlying scan is cached on ``x_max`` rounded up to a multiple of 8.
    """
    key = 8.0 * math.ceil(x_max / 8.0)
    # j_{m,1} > m, so orders above x_max contribute nothing
    m, k, j = _zeros_scan(int(key), key)
    sel = j <= x_max
    return m[sel], k[sel], j[sel]


def bessel_zero_table(m_max: int, count: int) -> np.ndarray:
    """Array ``(m_max + 1, count)`` of the first zeros of J_0 .. J_{m_max}."""
    x_max = float(math.ceil(_mcmahon(m_max, count) + 2.0 * math.pi))
    while True:
        orders, _, z = _zeros_scan(int(m_max), x_max)
        per_order = np.bincount(orders, minlength=m_max + 1)
        if per_order.min() >= count:
            break
        x_max = float(math.ceil(1.5 * x_max))
    starts = np.r_[0, np.cumsum(per_order)[:-1]]
    return np.stack([z[s0:s0 + count] for s0 in starts])


@dataclass(frozen=True)
class EigenMode:
    """One Dirichlet eigenpair of -Laplace on the unit disc."""

    m: int
    k: int
    lam: float
    sqrt_lambda: float
    omega: float

    @property
    def order(self) -> int:
        return abs(self.m)


def normalisation(order: int, sqrt_lambda: float) -> float:
    return 1.0 / (math.sqrt(math.pi) * bessel_j(order + 1, sqrt_lambda))


def enumerate_modes(m_max: int, k_max: int) -> list[EigenMode]:
    """Signed modes with ``|m| <= m_max`` and ``k <= k_max``, by eigenvalue.

    Ties are broken by ``|m|`` and then ``+m`` before ``-m``.
    """
    if m_max < 0 or k_max < 1:
        raise ValueError("need m_max >= 0 and k_max >= 1")
    table = bessel_zero_table(int(m_max), int(k_max))
    modes = []
    for order in range(m_max + 1):
        z = table[order]
        _, jnext = bessel_jn_pair(np.full(z.size, order), z)
        omega = 1.0 / (math.sqrt(math.pi) * jnext)
        for k in range(k_max):
            lam = float(z[k] * z[k])
            for sign in ((1,) if order == 0 else (1, -1)):
                modes.append(EigenMode(sign * order, k + 1, lam, float(z[k]), float(omega[k])))
    modes.sort(key=lambda md: (md.lam, abs(md.m), -md.m))
    return modes


def eval_eigenfunction(mode: EigenMode, point: PolarPoint) -> complex:
    radial = bessel_j(mode.order, mode.sqrt_lambda * point.r)
    return mode.omega * radial * complex(math.cos(mode.m * point.theta), math.sin(mode.m * point.theta))
