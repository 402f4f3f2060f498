"""Warp profiles for diagonal cohomogeneity-one metrics on spheres.

A diagonal metric on S^n invariant under SO(k+1) x SO(n-k) is written on the
principal part as

    g = drho^2 + phi(rho)^2 g_{S^k} + psi(rho)^2 g_{S^{n-k-1}},   0 < rho < pi/2.

The round metric has phi = cos, psi = sin; the Cheeger family shrinks the orbit
directions by phi_s = cos/sqrt(1 + s cos^2), psi_s = sin/sqrt(1 + s sin^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError, ParameterError

HALF_PI = 0.5 * math.pi

# slack for rho values that come out of arithmetic a hair past the interval ends
_DOMAIN_SLACK = 1e-12
_FD_STEP = 1e-6

ROUND = "round"
CHEEGER = "cheeger"
CUSTOM = "custom"


@dataclass(frozen=True)
class SphereShape:
    """Sphere dimension n and block index k, i.e. R^{n+1} = R^{k+1} + R^{n-k}."""

    n: int
    k: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.k) != self.k:
            raise ParameterError(f"n and k must be integers, got n={self.n}, k={self.k}")
        if self.n < 3:
            raise ParameterError(f"need n >= 3, got n={self.n}")
        if not 1 <= self.k <= self.n - 2:
            raise ParameterError(f"need 1 <= k <= n-2, got n={self.n}, k={self.k}")

    @property
    def split(self) -> tuple[int, int]:
        """Sizes of the two coordinate blocks (k+1, n-k)."""
        return self.k + 1, self.n - self.k


def _check_rho(rho):
    r = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < -_DOMAIN_SLACK) or np.any(r > HALF_PI + _DOMAIN_SLACK):
        raise DomainError(f"rho must lie in [0, pi/2], got {rho!r}")
    return np.clip(r, 0.0, HALF_PI)


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True, eq=False)
class WarpProfile:
    """The pair of warping functions (phi, psi) on [0, pi/2].

    Use the constructors :meth:`round`, :meth:`cheeger` and :meth:`custom`.
    Custom callables must accept numpy arrays.
    """

    family: str
    s: float = 0.0
    phi: Optional[Callable] = field(default=None, repr=False)
    psi: Optional[Callable] = field(default=None, repr=False)
    dphi: Optional[Callable] = field(default=None, repr=False)
    dpsi: Optional[Callable] = field(default=None, repr=False)

    @classmethod
    def round(cls) -> "WarpProfile":
        return cls(ROUND, 0.0)

    @classmethod
    def cheeger(cls, s: float) -> "WarpProfile":
        s = float(s)
        if not math.isfinite(s) or s < 0:
            raise ParameterError(f"Cheeger parameter must be >= 0, got s={s}")
        return cls(CHEEGER, s)

    @classmethod
    def custom(cls, phi, psi, dphi=None, dpsi=None) -> "WarpProfile":
        if not (callable(phi) and callable(psi)):
            raise ParameterError("custom warps need callable phi and psi")
        return cls(CUSTOM, float("nan"), phi, psi, dphi, dpsi)

    @property
    def is_builtin(self) -> bool:
        return self.family in (ROUND, CHEEGER)

    @property
    def deformation(self) -> float:
        """Cheeger parameter (0 for the round warp)."""
        if not self.is_builtin:
            raise ParameterError("custom warps have no Cheeger parameter")
        return self.s if self.family == CHEEGER else 0.0

    def key(self):
        """Hashable identity; equal keys mean identical reduced geometry."""
        if self.is_builtin:
            return (CHEEGER, self.deformation)
        return (CUSTOM, id(self))

    def __eq__(self, other):
        return isinstance(other, WarpProfile) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    # -- evaluation on [0, pi/2] ------------------------------------------------

    def _custom_values(self, r):
        phi = np.asarray(self.phi(r), dtype=float) * np.ones_like(r)
        psi = np.asarray(self.psi(r), dtype=float) * np.ones_like(r)
        if self.dphi is not None:
            dphi = np.asarray(self.dphi(r), dtype=float) * np.ones_like(r)
        else:
            dphi = _numeric_derivative(self.phi, r)
        if self.dpsi is not None:
            dpsi = np.asarray(self.dpsi(r), dtype=float) * np.ones_like(r)
        else:
            dpsi = _numeric_derivative(self.psi, r)
        return phi, psi, dphi, dpsi

    def values(self, rho):
        """(phi, psi, phi', psi') at rho in [0, pi/2]; array-valued for array input."""
        r = _check_rho(rho)
        if self.is_builtin:
            out = cheeger_values(r, self.deformation)
        else:
            out = self._custom_values(r)
        return tuple(_scalar_or_array(x, rho) for x in out)

    def extended(self, rho):
        """(phi, psi, phi', psi') continued to all real rho.

        The continuation is the one seen by geodesics passing through the
        singular orbits: phi is even about 0 and odd about pi/2, psi is odd
        about 0 and even about pi/2 (period 2*pi).
        """
        r = np.asarray(rho, dtype=float)
        if self.is_builtin:
            out = cheeger_values(r, self.deformation)
        else:
            c, sn = np.cos(r), np.sin(r)
            base = np.arctan2(np.abs(sn), np.abs(c))
            sc, ss = np.sign(c), np.sign(sn)
            phi, psi, dphi, dpsi = self._custom_values(base)
            out = (sc * phi, ss * psi, ss * dphi, sc * dpsi)
        return tuple(_scalar_or_array(x, rho) for x in out)


def cheeger_values(rho, s: float):
    """Closed-form Cheeger warps and their derivatives, valid for any real rho."""
    c = np.cos(rho)
    sn = np.sin(rho)
    a = 1.0 + s * c * c
    b = 1.0 + s * sn * sn
    phi = c / np.sqrt(a)
    psi = sn / np.sqrt(b)
    dphi = -sn / a ** 1.5
    dpsi = c / b ** 1.5
    return phi, psi, dphi, dpsi


def _numeric_derivative(f, r):
    """Centered differences inside [0, pi/2], second-order one-sided at the ends."""
    h = _FD_STEP
    r = np.asarray(r, dtype=float)
    d = np.empty_like(r)
    lo = r < h
    hi = r > HALF_PI - h
    mid = ~(lo | hi)
    if np.any(mid):
        rm = r[mid]
        d[mid] = (np.asarray(f(rm + h)) - np.asarray(f(rm - h))) / (2 * h)
    if np.any(lo):
        rl = r[lo]
        d[lo] = (-3 * np.asarray(f(rl)) + 4 * np.asarray(f(rl + h)) - np.asarray(f(rl + 2 * h))) / (2 * h)
    if np.any(hi):
        rh = r[hi]
        d[hi] = (3 * np.asarray(f(rh)) - 4 * np.asarray(f(rh - h)) + np.asarray(f(rh - 2 * h))) / (2 * h)
    return d


def warp_eval(warp: WarpProfile, rho):
    """Return (phi, psi, phi', psi') of ``warp`` at ``rho``."""
    return warp.values(rho)


@dataclass(frozen=True)
class SmoothnessReport:
    residuals: dict
    tol: float
    passed: bool

    def failures(self) -> dict:
        return {k: v for k, v in self.residuals.items() if not v <= self.tol}


def smoothness_check(warp: WarpProfile, tol: float = 1e-8) -> SmoothnessReport:
    """Residuals of the first-order closing conditions at both singular orbits.

    psi(0)=0, psi'(0)=1, phi'(0)=0 at rho=0 and phi(pi/2)=0, phi'(pi/2)=-1,
    psi'(pi/2)=0 at rho=pi/2.
    """
    phi0, psi0, dphi0, dpsi0 = warp.values(0.0)
    phi1, psi1, dphi1, dpsi1 = warp.values(HALF_PI)
    residuals = {
        "psi(0)=0": abs(psi0),
        "psi'(0)=1": abs(dpsi0 - 1.0),
        "phi'(0)=0": abs(dphi0),
        "phi(pi/2)=0": abs(phi1),
        "phi'(pi/2)=-1": abs(dphi1 + 1.0),
        "psi'(pi/2)=0": abs(dpsi1),
    }
    residuals = {k: float(v) for k, v in residuals.items()}
    passed = all(v <= tol for v in residuals.values())
    return SmoothnessReport(residuals, tol, passed)


@dataclass(frozen=True)
class DiagonalMetric:
    shape: SphereShape
    warp: WarpProfile

    def __post_init__(self):
        if self.warp.is_builtin:
            report = smoothness_check(self.warp)
            if not report.passed:
                raise ParameterError(f"warp fails smoothness conditions: {report.failures()}")

    @classmethod
    def cheeger(cls, n: int, k: int, s: float) -> "DiagonalMetric":
        warp = WarpProfile.round() if s == 0 else WarpProfile.cheeger(s)
        return cls(SphereShape(n, k), warp)

    @classmethod
    def round(cls, n: int = 3, k: int = 1) -> "DiagonalMetric":
        return cls(SphereShape(n, k), WarpProfile.round())


def orbit_diameter(metric: DiagonalMetric, rho):
    """Intrinsic diameter pi*sqrt(phi^2 + psi^2) of the orbit through gamma(rho)."""
    phi, psi, _, _ = metric.warp.values(rho)
    return math.pi * np.sqrt(np.square(phi) + np.square(psi))


def max_orbit_diameter(metric: DiagonalMetric) -> tuple[float, float]:
    """Location and value of the largest orbit diameter over [0, pi/2]."""
    warp = metric.warp
    if warp.is_builtin:
        s = warp.deformation
        # at s=0 the profile is constant; pi/4 keeps continuity with s>0
        return math.pi / 4, math.pi / math.sqrt(1.0 + s / 2.0)
    return _numeric_max_orbit_diameter(metric)


def _numeric_max_orbit_diameter(metric: DiagonalMetric, n_grid: int = 2001):
    grid = np.linspace(0.0, HALF_PI, n_grid)
    vals = np.asarray(orbit_diameter(metric, grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError("orbit diameter is not finite on [0, pi/2]")
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_grid - 1)]
    if hi <= lo:
        return float(grid[i]), float(vals[i])
    res = optimize.minimize_scalar(
        lambda r: -float(orbit_diameter(metric, r)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if not res.success:
        raise ConvergenceError(f"orbit diameter maximization failed: {res.message}")
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(vals[i])
