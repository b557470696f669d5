"""Polar points on the unit disc and the point-source location type."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a value just below a multiple of 2*pi can round up to 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


def angle_distance(a: float, b: float) -> float:
    """Wrapped distance between two angles, in [0, pi]."""
    d = abs(wrap_angle(a) - wrap_angle(b))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0):
            raise ValueError(f"radius {self.r} outside [0, 1]")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class SourcePoint:
    """Location (r_star, theta_star) of the unit Dirac source."""

    r_star: float
    theta_star: float

    def __post_init__(self):
        if not (0.0 <= self.r_star < 1.0):
            raise ValueError(f"source radius {self.r_star} must lie in [0, 1)")
        object.__setattr__(self, "theta_star", wrap_angle(self.theta_star))

    @property
    def point(self) -> PolarPoint:
        return PolarPoint(self.r_star, self.theta_star)

    def cartesian(self) -> tuple[float, float]:
        return (self.r_star * math.cos(self.theta_star), self.r_star * math.sin(self.theta_star))
