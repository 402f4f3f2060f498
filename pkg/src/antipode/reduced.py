"""Points of the symmetry-reduced space and distance results.

Every distance query lives in the box [0, pi/2] x [0, pi] x [0, pi] with
coordinates (rho, u, v): rho is the orbit parameter, u the angle from a fixed
point in the unit S^k, v the angle from a fixed point in the unit S^{n-k-1}.
At rho = 0 the v coordinate is meaningless, at rho = pi/2 the u coordinate is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

HALF_PI = 0.5 * math.pi
_SLACK = 1e-12


@dataclass(frozen=True)
class ReducedPoint:
    rho: float
    u: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        for name, val, hi in (("rho", self.rho, HALF_PI), ("u", self.u, math.pi), ("v", self.v, math.pi)):
            if not math.isfinite(val) or val < -_SLACK or val > hi + _SLACK:
                raise DomainError(f"{name}={val!r} outside [0, {hi:.6g}]")
        object.__setattr__(self, "rho", min(max(float(self.rho), 0.0), HALF_PI))
        object.__setattr__(self, "u", min(max(float(self.u), 0.0), math.pi))
        object.__setattr__(self, "v", min(max(float(self.v), 0.0), math.pi))

    @property
    def on_first_pole(self) -> bool:
        """True on the singular orbit rho = 0 (v undefined)."""
        return self.rho == 0.0

    @property
    def on_second_pole(self) -> bool:
        """True on the singular orbit rho = pi/2 (u undefined)."""
        return self.rho == HALF_PI

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.u, self.v])

    def canonical(self) -> tuple[float, float, float]:
        """Coordinates with the undefined angle at a pole set to 0."""
        if self.on_first_pole:
            return (0.0, self.u, 0.0)
        if self.on_second_pole:
            return (HALF_PI, 0.0, self.v)
        return (self.rho, self.u, self.v)


def fold_angle(a):
    """Map an angle on the circle to its distance from 0, i.e. into [0, pi]."""
    a = np.mod(a, 2 * math.pi)
    return np.where(a > math.pi, 2 * math.pi - a, a)


def fold(rho, u, v):
    """Canonical reduced coordinates of an unfolded triple (rho, u, v), rho real.

    The unfolded triple describes the point cos(rho) x(u) + sin(rho) y(v) where
    x, y trace great circles in the two factors; a negative cosine or sine is
    absorbed by a half turn of the corresponding angle.
    """
    rho = np.asarray(rho, dtype=float)
    c, s = np.cos(rho), np.sin(rho)
    u = np.where(c < 0, np.asarray(u) + math.pi, u)
    v = np.where(s < 0, np.asarray(v) + math.pi, v)
    r = np.arctan2(np.abs(s), np.abs(c))
    out = (r, fold_angle(u), fold_angle(v))
    if np.ndim(rho) == 0:
        return tuple(float(x) for x in out)
    return out


def embed(rho, u, v):
    """Continuous embedding of unfolded coordinates into the unit 3-sphere.

    Two unfolded triples describe the same reduced point iff their images agree
    up to the sign flips of the 2nd and 4th components.
    """
    c, s = np.cos(rho), np.sin(rho)
    return np.stack([c * np.cos(u), c * np.sin(u), s * np.cos(v), s * np.sin(v)], axis=-1)


def round_distance(p: ReducedPoint, q: ReducedPoint) -> float:
    """Closed-form reduced distance for the round metric (spherical law of cosines)."""
    c = (math.cos(p.rho) * math.cos(q.rho) * math.cos(p.u - q.u)
         + math.sin(p.rho) * math.sin(q.rho) * math.cos(p.v - q.v))
    return math.acos(min(1.0, max(-1.0, c)))


@dataclass
class DistanceResult:
    """A distance in radians with provenance.

    ``method`` is one of ``shooting``, ``grid``, ``refined``, ``closed_form``.
    ``path`` is an optional (m, 3) array of reduced coordinates.
    """

    value: float
    method: str
    error_estimate: float
    path: Optional[np.ndarray] = field(default=None, repr=False)
    details: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.value < 0 or self.error_estimate < 0:
            raise ValueError(f"negative distance or error: {self.value}, {self.error_estimate}")

    def projection_bound_holds(self, p: ReducedPoint, q: ReducedPoint) -> bool:
        """The orbit projection is 1-Lipschitz, so d(p, q) >= |rho_p - rho_q|."""
        return self.value >= abs(p.rho - q.rho) - self.error_estimate - 1e-12
