"""Least-squares recovery of the source location from sparse boundary flux.

Four objectives share one form,

    J(r, theta) = w * sum_{angles} sum_{times} (flux_h(z, t; r, theta) - f(z, t))^2,

differing in which angles and time samples enter and in the weight ``w``
(``T/d`` for the time-integrated kinds J and J2, 1 for the point-in-time
kinds J1 and J3). The gradient needs the flux sensitivities with respect to
``r`` and ``theta``, obtained from the sensitivity problem, whose load is
the source-location derivative of the point load.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import EdgeProximityError, assemble, derivative_load, flux_response, point_load
from .geometry import TWO_PI, SourcePoint, angle_distance, wrap_angle
from .mesh import Mesh, build_mesh

KINDS = ("J", "J1", "J2", "J3")


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    obs_angles: tuple[float, ...]
    obs_times: tuple[float, ...] = ()
    horizon: float = 1.0
    steps: int = 500

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        object.__setattr__(self, "obs_angles", tuple(float(a) for a in self.obs_angles))
        object.__setattr__(self, "obs_times", tuple(float(t) for t in self.obs_times))
        want_angles = 2 if self.kind in ("J", "J1") else 1
        if len(self.obs_angles) != want_angles:
            raise ValueError(f"{self.kind} needs exactly {want_angles} observation angle(s)")
        want_times = {"J": 0, "J2": 0, "J1": 1, "J3": 2}[self.kind]
        if len(self.obs_times) != want_times:
            raise ValueError(f"{self.kind} needs exactly {want_times} observation time(s)")
        if any(not (0.0 < t <= self.horizon) for t in self.obs_times):
            raise ValueError("observation times must lie in (0, T]")
        if self.kind == "J3" and self.obs_times[0] == self.obs_times[1]:
            raise ValueError("J3 observation times must be distinct")
        self.time_indices()

    @classmethod
    def default(cls, kind: str, obs_angles, horizon: float = 1.0, steps: int = 500) -> "ObjectiveSpec":
        """Spec with the default observation times T/2 (J1) and (T/4, 3T/4) (J3)."""
        times = {"J": (), "J2": (), "J1": (horizon / 2,), "J3": (horizon / 4, 3 * horizon / 4)}[kind]
        return cls(kind, tuple(obs_angles), times, horizon, steps)

    @property
    def weight(self) -> float:
        return self.horizon / self.steps if self.kind in ("J", "J2") else 1.0

    @property
    def grid(self) -> np.ndarray:
        return self.horizon * np.arange(1, self.steps + 1) / self.steps

    def time_indices(self) -> np.ndarray:
        """Indices into the sample grid t_i = i T / d, i = 1..d."""
        if not self.obs_times:
            return np.arange(self.steps)
        idx = []
        for t in self.obs_times:
            k = round(t * self.steps / self.horizon)
            if abs(k * self.horizon / self.steps - t) > 1e-9 * self.horizon or k < 1:
                raise ValueError(f"observation time {t} is not on the grid T/d * i")
            idx.append(k - 1)
        return np.array(idx)


class FemModel:
    """Solver context: FEM flux traces and sensitivities at fixed angles.

    Holds the assembled, factorised system and the flux response operator
    for the observation angles, so a candidate source costs a few small
    products. The model is immutable after construction.
    """

    def __init__(self, mesh: Mesh, obs_angles, steps: int, horizon: float):
        self.mesh = mesh
        self.obs_angles = tuple(float(a) for a in obs_angles)
        self.steps = steps
        self.horizon = horizon
        self.system = assemble(mesh)
        self.response = flux_response(self.system, self.obs_angles, steps, horizon)

    @classmethod
    def build(cls, m_r: int, n_theta: int, obs_angles, steps: int = 500, horizon: float = 1.0) -> "FemModel":
        return cls(build_mesh(m_r, n_theta), obs_angles, steps, horizon)

    def _apply(self, load: np.ndarray) -> np.ndarray:
        idx = np.flatnonzero(load)
        free = self.mesh.free_index[idx]
        keep = free >= 0
        return self.response[:, :, free[keep]] @ load[idx[keep]]

    def traces(self, source: SourcePoint) -> np.ndarray:
        """Flux at every observation angle and grid time, shape (n_angles, d)."""
        return self._apply(point_load(self.mesh, source))

    def sensitivities(self, source: SourcePoint) -> tuple[np.ndarray, np.ndarray]:
        return (
            self._apply(derivative_load(self.mesh, source, "r")),
            self._apply(derivative_load(self.mesh, source, "theta")),
        )


def _observed(data, spec: ObjectiveSpec) -> np.ndarray:
    arr = np.array([getattr(tr, "values", tr) for tr in data], dtype=float)
    if arr.shape != (len(spec.obs_angles), spec.steps):
        raise ValueError(f"data shape {arr.shape} does not match spec ({len(spec.obs_angles)}, {spec.steps})")
    return arr


def _check_candidate(candidate: SourcePoint, bounds: tuple[float, float]):
    if not (bounds[0] <= candidate.r_star <= bounds[1]):
        raise ValueError(f"candidate radius {candidate.r_star} outside clamp {bounds}")


def _residuals(candidate, data, spec, model) -> tuple[np.ndarray, np.ndarray]:
    idx = spec.time_indices()
    obs = _observed(data, spec)[:, idx]
    return model.traces(candidate)[:, idx] - obs, idx


def evaluate_objective(candidate: SourcePoint, data, spec: ObjectiveSpec, model, bounds=(0.02, 0.98)) -> float:
    _check_candidate(candidate, bounds)
    res, _ = _residuals(candidate, data, spec, model)
    return spec.weight * float(np.sum(res * res))


def gradient(candidate: SourcePoint, data, spec: ObjectiveSpec, model, bounds=(0.02, 0.98)) -> tuple[float, float]:
    """``(dJ/dr, dJ/dtheta)`` from the two sensitivity traces."""
    _check_candidate(candidate, bounds)
    res, idx = _residuals(candidate, data, spec, model)
    d_r, d_t = model.sensitivities(candidate)
    scale = 2.0 * spec.weight
    return scale * float(np.sum(res * d_r[:, idx])), scale * float(np.sum(res * d_t[:, idx]))


def fd_gradient(candidate: SourcePoint, data, spec: ObjectiveSpec, model, h: float = 1e-4, bounds=(0.02, 0.98)):
    """Central-difference gradient of :func:`evaluate_objective`."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    r, t = candidate.r_star, candidate.theta_star

    def j(rr, tt):
        return evaluate_objective(SourcePoint(rr, tt), data, spec, model, bounds)

    return (j(r + h, t) - j(r - h, t)) / (2 * h), (j(r, t + h) - j(r, t - h)) / (2 * h)


@dataclass(frozen=True)
class DescentConfig:
    init: SourcePoint = SourcePoint(0.5, 1.5)
    epsilon: float = 1e-6
    max_iters: int = 200
    armijo: float = 1e-4
    backtrack: float = 0.5
    alpha0: float = 0.1
    r_lo: float = 0.02
    r_hi: float = 0.98
    max_backtracks: int = 40
    growth: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.r_lo < self.r_hi < 1.0):
            raise ValueError("need 0 < r_lo < r_hi < 1")
        if not (self.r_lo <= self.init.r_star <= self.r_hi):
            raise ValueError("initial radius outside the clamp interval")
        if not (0.0 < self.backtrack < 1.0) or self.alpha0 <= 0.0:
            raise ValueError("need 0 < backtrack < 1 and alpha0 > 0")
        if self.growth < 1.0:
            raise ValueError("growth must be at least 1")

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.r_lo, self.r_hi)


@dataclass(frozen=True)
class Iterate:
    iter: int
    r: float
    theta: float
    J: float
    grad_r: float
    grad_theta: float
    alpha: float


@dataclass
class InversionResult:
    estimate: SourcePoint
    converged: bool
    iterates: list[Iterate] = field(default_factory=list)
    message: str = ""

    def write_iterates(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "r", "theta", "J", "grad_r", "grad_theta", "alpha"])
            for it in self.iterates:
                w.writerow([it.iter, repr(it.r), repr(it.theta), repr(it.J), repr(it.grad_r), repr(it.grad_theta), repr(it.alpha)])


def _value_and_gradient(point, data, spec, model, bounds):
    for _ in range(4):
        try:
            g = gradient(point, data, spec, model, bounds)
        except EdgeProximityError as exc:
            dr, dt = exc.suggested
            r = min(max(point.r_star + dr, bounds[0]), bounds[1])
            point = SourcePoint(r, point.theta_star + dt)
            continue
        return point, evaluate_objective(point, data, spec, model, bounds), g
    raise RuntimeError("could not move the iterate off element edges")


def relative_change(old: SourcePoint, new: SourcePoint) -> float:
    dr = abs(new.r_star - old.r_star) / abs(new.r_star)
    dt = angle_distance(new.theta_star, old.theta_star) / max(abs(new.theta_star), 1e-12)
    return dr + dt


def descend(data, spec: ObjectiveSpec, cfg: DescentConfig, model) -> InversionResult:
    """Projected gradient descent with backtracking Armijo line search.

    Stops once the relative parameter change of an accepted step drops
    below ``cfg.epsilon`` (converged) or after ``cfg.max_iters`` steps.
    """
    bounds = cfg.bounds
    x, fx, g = _value_and_gradient(cfg.init, data, spec, model, bounds)
    result = InversionResult(x, False)
    result.iterates.append(Iterate(0, x.r_star, x.theta_star, fx, g[0], g[1], 0.0))
    alpha = cfg.alpha0
    for it in range(1, cfg.max_iters + 1):
        # warm start: try twice the last accepted step so alpha can recover
        if it > 1:
            alpha *= cfg.growth
        accepted = None
        for _ in range(cfg.max_backtracks):
            r_new = min(max(x.r_star - alpha * g[0], bounds[0]), bounds[1])
            trial = SourcePoint(r_new, wrap_angle(x.theta_star - alpha * g[1]))
            # projected step; the theta increment is measured before wrapping
            step_r = trial.r_star - x.r_star
            step_t = -alpha * g[1]
            f_trial = evaluate_objective(trial, data, spec, model, bounds)
            if f_trial <= fx + cfg.armijo * (g[0] * step_r + g[1] * step_t):
                accepted = trial
                break
            alpha *= cfg.backtrack
        if accepted is None:
            result.message = f"line search failed after {cfg.max_backtracks} backtracks"
            return result
        new, f_new, g_new = _value_and_gradient(accepted, data, spec, model, bounds)
        if f_new > fx:
            # nudged off an edge onto a worse point: keep the Armijo point and
            # use the gradient of its nudged neighbour (undefined on the edge)
            new, f_new = accepted, f_trial
        change = relative_change(x, new)
        x, fx, g = new, f_new, g_new
        result.estimate = x
        result.iterates.append(Iterate(it, x.r_star, x.theta_star, fx, g[0], g[1], alpha))
        if change < cfg.epsilon:
            result.converged = True
            result.message = f"relative change {change:.3g} below {cfg.epsilon:g}"
            return result
    result.message = f"stopped after {cfg.max_iters} iterations"
    return result


def grid_initial_guess(data, spec: ObjectiveSpec, model, n: int = 8, bounds=(0.02, 0.98)) -> SourcePoint:
    """Best of an ``n x n`` polar grid of candidates (for unattended runs)."""
    radii = bounds[0] + (bounds[1] - bounds[0]) * (np.arange(n) + 0.5) / n
    angles = TWO_PI * (np.arange(n) + 0.5) / n
    best = None
    for r in radii:
        for t in angles:
            cand = SourcePoint(float(r), float(t))
            val = evaluate_objective(cand, data, spec, model, bounds)
            if best is None or val < best[0]:
                best = (val, cand)
    return best[1]


def location_errors(truth: SourcePoint, estimate: SourcePoint) -> dict[str, float]:
    """Absolute errors in r, wrapped theta and the Cartesian coordinates."""
    tx, ty = truth.cartesian()
    ex, ey = estimate.cartesian()
    return {
        "r": abs(truth.r_star - estimate.r_star),
        "theta": angle_distance(truth.theta_star, estimate.theta_star),
        "x": abs(tx - ex),
        "y": abs(ty - ey),
    }


