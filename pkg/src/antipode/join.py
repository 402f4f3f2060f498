"""Spherical join S^k(r) * S^{n-k-1}(r) of two round spheres of radius r.

A point is (x, rho, y) with x in S^k(r), y in S^{n-k-1}(r), rho in [0, pi/2];
the x coordinate is forgotten at rho = pi/2 and the y coordinate at rho = 0.
The join distance is

    cos d = cos rho1 cos rho2 cos d_x + sin rho1 sin rho2 cos d_y,

with d_x, d_y the distances inside the factors.  Both factors have diameter
pi r, so for r < 1/2 every cosine is positive and the join has diameter pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError
from .metrics import SphereShape
from .reduced import HALF_PI

_SLACK = 1e-12
MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class JoinParams:
    r: float
    shape: SphereShape = field(default_factory=lambda: SphereShape(3, 1))

    def __post_init__(self):
        if not (math.isfinite(self.r) and 0.0 < self.r <= 1.0):
            raise ParameterError(f"join radius must lie in (0, 1], got r={self.r}")

    @property
    def factor_diameter(self) -> float:
        return math.pi * self.r


@dataclass(frozen=True)
class JoinPoint:
    """Reduced join coordinates: distances of x and y to reference points of
    their factors, and the join parameter rho."""

    x_angle: float
    rho: float
    y_angle: float

    def __post_init__(self):
        if not (math.isfinite(self.rho) and -_SLACK <= self.rho <= HALF_PI + _SLACK):
            raise DomainError(f"rho={self.rho} outside [0, pi/2]")
        for name in ("x_angle", "y_angle"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= -_SLACK):
                raise DomainError(f"{name}={val} must be a nonnegative distance")
        object.__setattr__(self, "rho", min(max(float(self.rho), 0.0), HALF_PI))

    def validate(self, params: JoinParams) -> None:
        top = params.factor_diameter + _SLACK
        if self.x_angle > top or self.y_angle > top:
            raise DomainError(f"factor angles ({self.x_angle}, {self.y_angle}) exceed pi*r = {params.factor_diameter}")


def join_formula(rho1, rho2, dx, dy):
    """Vectorized join distance from the orbit parameters and factor distances."""
    c = np.cos(rho1) * np.cos(rho2) * np.cos(dx) + np.sin(rho1) * np.sin(rho2) * np.cos(dy)
    return np.arccos(np.clip(c, -1.0, 1.0))


def _factor_distance(params: JoinParams, d: float, name: str) -> float:
    if not (math.isfinite(d) and -_SLACK <= d <= params.factor_diameter + _SLACK):
        raise DomainError(f"{name}={d} outside [0, pi*r] = [0, {params.factor_diameter}]")
    return min(max(float(d), 0.0), params.factor_diameter)


def join_distance_raw(params: JoinParams, rho1: float, rho2: float, dx: float, dy: float) -> float:
    """Join distance given the factor distances directly."""
    dx = _factor_distance(params, dx, "d_x")
    dy = _factor_distance(params, dy, "d_y")
    for rho in (rho1, rho2):
        if not (-_SLACK <= rho <= HALF_PI + _SLACK):
            raise DomainError(f"rho={rho} outside [0, pi/2]")
    return float(join_formula(rho1, rho2, dx, dy))


def join_distance(params: JoinParams, p1: JoinPoint, p2: JoinPoint) -> float:
    """Distance between two reduced join points (factor distance |x1 - x2| and |y1 - y2|)."""
    p1.validate(params)
    p2.validate(params)
    return join_distance_raw(params, p1.rho, p2.rho,
                             abs(p1.x_angle - p2.x_angle), abs(p1.y_angle - p2.y_angle))


def join_displacement(params: JoinParams, rho: float) -> float:
    """Distance from (x, rho, y) to (-x, rho, -y); equals pi*r for every rho."""
    if not (math.isfinite(rho) and -_SLACK <= rho <= HALF_PI + _SLACK):
        raise DomainError(f"rho={rho} outside [0, pi/2]")
    d = params.factor_diameter
    return float(join_formula(rho, rho, d, d))


@dataclass(frozen=True)
class JoinSamples:
    rho1: np.ndarray
    rho2: np.ndarray
    dx: np.ndarray
    dy: np.ndarray

    def distances(self) -> np.ndarray:
        return join_formula(self.rho1, self.rho2, self.dx, self.dy)


def sample_pairs(params: JoinParams, n: int, seed: int, same_rho: bool = False) -> JoinSamples:
    """Seeded random pairs: rho uniform on [0, pi/2], factor distances uniform on [0, pi r]."""
    rng = np.random.default_rng(seed)
    rho1 = rng.uniform(0.0, HALF_PI, n)
    rho2 = rho1.copy() if same_rho else rng.uniform(0.0, HALF_PI, n)
    dx = rng.uniform(0.0, params.factor_diameter, n)
    dy = rng.uniform(0.0, params.factor_diameter, n)
    return JoinSamples(rho1, rho2, dx, dy)


def join_diameter(params: JoinParams, samples: int = MIN_SAMPLES, seed: int = 0) -> float:
    """Largest distance over sampled pairs and the analytic candidates.

    The candidates are a point of S^k(r) against a point of S^{n-k-1}(r)
    (distance pi/2) and a point against its antipodal image (distance pi r).
    """
    if samples < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    sampled = float(np.max(sample_pairs(params, samples, seed).distances()))
    candidates = (
        float(join_formula(0.0, HALF_PI, 0.0, 0.0)),
        join_displacement(params, math.pi / 4),
    )
    return max(sampled, *candidates)
