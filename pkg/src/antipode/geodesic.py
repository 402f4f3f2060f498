"""Geodesic flow of the reduced metric drho^2 + phi^2 du^2 + psi^2 dv^2.

The angles u, v are cyclic, so their momenta p_u = phi^2 u', p_v = psi^2 v' are
constants of motion (Clairaut integrals) and the flow reduces to

    rho' = p_rho,  u' = p_u / phi^2,  v' = p_v / psi^2,
    p_rho' = p_u^2 phi' / phi^3 + p_v^2 psi' / psi^3.

Integration happens in unfolded coordinates: rho is any real number (the warps
are continued by parity, which is how a geodesic crosses a singular orbit) and
u, v are angles on full circles.  :func:`antipode.reduced.fold` maps the result
back to the reduced box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy import integrate, optimize

from .errors import ConvergenceError, ParameterError, SingularOrbitError, StepSizeError
from .metrics import DiagonalMetric, WarpProfile
from .reduced import HALF_PI, DistanceResult, ReducedPoint, embed, fold

DEFAULT_STEP_TOL = 1e-10
H_TOL = 1e-10

_OK, _UNDERFLOW, _SINGULAR, _MAXSTEPS = 0, 1, 2, 3


@dataclass(frozen=True)
class GeodesicState:
    rho: float
    u: float
    v: float
    p_rho: float
    p_u: float
    p_v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.u, self.v, self.p_rho, self.p_u, self.p_v])

    def hamiltonian(self, warp: WarpProfile) -> float:
        return hamiltonian(warp, self.rho, self.p_rho, self.p_u, self.p_v)

    def normalized(self, warp: WarpProfile) -> "GeodesicState":
        """Same direction, momenta rescaled to unit speed."""
        f = 1.0 / math.sqrt(2.0 * self.hamiltonian(warp))
        return GeodesicState(self.rho, self.u, self.v, f * self.p_rho, f * self.p_u, f * self.p_v)

    def reversed(self) -> "GeodesicState":
        return GeodesicState(self.rho, self.u, self.v, -self.p_rho, -self.p_u, -self.p_v)


def hamiltonian(warp: WarpProfile, rho, p_rho, p_u, p_v):
    phi, psi, _, _ = warp.extended(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ku = np.where(np.asarray(p_u) == 0, 0.0, np.square(p_u) / np.square(phi))
        kv = np.where(np.asarray(p_v) == 0, 0.0, np.square(p_v) / np.square(psi))
    h = 0.5 * (np.square(p_rho) + ku + kv)
    return float(h) if np.ndim(h) == 0 else h


def unit_state(metric: DiagonalMetric, point: ReducedPoint, alpha: float, beta: float) -> GeodesicState:
    """Unit-speed state at ``point`` heading at polar angle ``alpha`` from the
    rho axis and azimuth ``beta`` in the (u, v) orbit plane."""
    phi, psi, _, _ = metric.warp.values(point.rho)
    sa = math.sin(alpha)
    return GeodesicState(point.rho, point.u, point.v, math.cos(alpha),
                         phi * sa * math.cos(beta), psi * sa * math.sin(beta))


# --------------------------------------------------------------------------
# Dormand-Prince 5(4) for the closed-form warps

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 6))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@nb.njit(cache=True, error_model="numpy")
def _rhs(s, y, pu, pv, out):
    c = np.cos(y[0])
    sn = np.sin(y[0])
    a = 1.0 + s * c * c
    b = 1.0 + s * sn * sn
    phi = c / np.sqrt(a)
    psi = sn / np.sqrt(b)
    out[0] = y[3]
    f = 0.0
    if pu != 0.0:
        out[1] = pu / (phi * phi)
        f += pu * pu * (-sn / a ** 1.5) / (phi * phi * phi)
    else:
        out[1] = 0.0
    if pv != 0.0:
        out[2] = pv / (psi * psi)
        f += pv * pv * (c / b ** 1.5) / (psi * psi * psi)
    else:
        out[2] = 0.0
    out[3] = f
    return not (np.isfinite(out[1]) and np.isfinite(out[2]) and np.isfinite(f))


@nb.njit(cache=True, error_model="numpy")
def _dopri(s, y0, pu, pv, T, tol, max_steps, A, B, E, C):
    ts = np.empty(max_steps + 1)
    ys = np.empty((max_steps + 1, 4))
    ts[0] = 0.0
    ys[0] = y0
    if T <= 0.0:
        return ts[:1], ys[:1], 0
    K = np.zeros((7, 4))
    y = y0.copy()
    tmp = np.empty(4)
    t = 0.0
    h = min(0.05, T)
    n = 0
    if _rhs(s, y, pu, pv, K[0]):
        return ts[:1], ys[:1], 2
    while t < T:
        if n >= max_steps:
            return ts[: n + 1], ys[: n + 1], 3
        if h < 1e-14 * max(1.0, T):
            return ts[: n + 1], ys[: n + 1], 1
        if t + h > T:
            h = T - t
        bad = False
        for st in range(1, 7):
            for q in range(4):
                acc = 0.0
                for r in range(st):
                    acc += A[st, r] * K[r, q]
                tmp[q] = y[q] + h * acc
            if _rhs(s, tmp, pu, pv, K[st]):
                bad = True
                break
        if bad:
            h *= 0.25
            continue
        err = 0.0
        for q in range(4):
            ynew = y[q]
            e = 0.0
            for r in range(7):
                ynew += h * B[r] * K[r, q]
                e += h * E[r] * K[r, q]
            sc = tol + tol * max(abs(y[q]), abs(ynew))
            ratio = abs(e) / sc
            if ratio > err:
                err = ratio
            tmp[q] = ynew
        if err <= 1.0:
            t += h
            for q in range(4):
                y[q] = tmp[q]
            # first-same-as-last: stage 7 is the derivative at the new point
            for q in range(4):
                K[0, q] = K[6, q]
            n += 1
            ts[n] = t
            ys[n] = y
        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-0.2)))
        h *= fac
    return ts[: n + 1], ys[: n + 1], 0


def _integrate_arrays(warp: WarpProfile, y0, pu: float, pv: float, T: float, tol: float,
                      max_steps: int = 20000):
    """Unfolded trajectory arrays (t, [rho, u, v, p_rho]) and a status code."""
    y0 = np.asarray(y0, dtype=float)
    if warp.is_builtin:
        return _dopri(warp.deformation, y0, float(pu), float(pv), float(T), float(tol),
                      max_steps, _A, _B, _E, _C)

    def rhs(_, y):
        phi, psi, dphi, dpsi = warp.extended(y[0])
        du = pu / phi ** 2 if pu != 0 else 0.0
        dv = pv / psi ** 2 if pv != 0 else 0.0
        f = (pu * pu * dphi / phi ** 3 if pu != 0 else 0.0) + (pv * pv * dpsi / psi ** 3 if pv != 0 else 0.0)
        return [y[3], du, dv, f]

    if T <= 0:
        return np.zeros(1), y0[None, :], _OK
    with np.errstate(divide="ignore", invalid="ignore"):
        sol = integrate.solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=tol, atol=tol)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        return sol.t, sol.y.T, _SINGULAR
    return sol.t, sol.y.T, _OK


@dataclass
class Trajectory:
    """Integrated geodesic.  ``y`` rows are unfolded (rho, u, v, p_rho)."""

    warp: WarpProfile = field(repr=False)
    t: np.ndarray
    y: np.ndarray
    p_u: float
    p_v: float

    @property
    def length(self) -> float:
        return float(self.t[-1])

    def folded_positions(self) -> np.ndarray:
        r, u, v = fold(self.y[:, 0], self.y[:, 1], self.y[:, 2])
        return np.stack([r, u, v], axis=-1)

    def states(self) -> list[GeodesicState]:
        """States with folded positions; momenta stay in the unfolded frame."""
        pos = self.folded_positions()
        return [GeodesicState(r, u, v, pr, self.p_u, self.p_v)
                for (r, u, v), pr in zip(pos, self.y[:, 3])]

    def end_state(self) -> GeodesicState:
        """Unfolded end state (suitable for continuing or reversing the flow)."""
        r, u, v, pr = self.y[-1]
        return GeodesicState(r, u, v, pr, self.p_u, self.p_v)

    def energy_drift(self) -> float:
        h = hamiltonian(self.warp, self.y[:, 0], self.y[:, 3], self.p_u, self.p_v)
        return float(np.max(np.abs(np.asarray(h) - 0.5)))


def integrate_geodesic(metric: DiagonalMetric, init: GeodesicState, T: float,
                       step_tol: float = DEFAULT_STEP_TOL) -> Trajectory:
    """Integrate the unit-speed geodesic flow from ``init`` for arc length ``T``."""
    warp = metric.warp
    if T < 0:
        raise ParameterError(f"arc length must be >= 0, got {T}")
    phi, psi, _, _ = warp.extended(init.rho)
    if (init.p_v != 0 and psi == 0) or (init.p_u != 0 and phi == 0):
        raise SingularOrbitError("initial state sits on a singular orbit with momentum in the collapsing angle")
    h0 = init.hamiltonian(warp)
    if not abs(h0 - 0.5) <= H_TOL:
        raise ParameterError(f"initial state is not unit speed: H = {h0!r}")
    y0 = [init.rho, init.u, init.v, init.p_rho]
    t, y, status = _integrate_arrays(warp, y0, init.p_u, init.p_v, T, step_tol)
    if status == _UNDERFLOW or status == _MAXSTEPS:
        raise StepSizeError(f"step size underflow at arc length {t[-1]:.6g}")
    if status == _SINGULAR:
        raise SingularOrbitError(f"trajectory hit a singular orbit at arc length {t[-1]:.6g}")
    return Trajectory(warp, t, y, float(init.p_u), float(init.p_v))


# --------------------------------------------------------------------------
# shooting

@dataclass
class ShootingOptions:
    n_alpha: int = 16
    n_beta: int = 16
    step_tol: float = DEFAULT_STEP_TOL
    screen_tol: float = 1e-7
    residual_tol: float = 1e-9
    n_candidates: int = 8
    t_max: Optional[float] = None
    warm_path: Optional[np.ndarray] = None
    broken: bool = True


class _Shooter:
    """Boundary value problem from a fixed source to one reduced target.

    Unknowns are (alpha, beta, T) for an interior source.  On a singular orbit
    the collapsing angle of the source is free and the matching momentum is
    zero, so the second unknown becomes that angle.
    """

    def __init__(self, metric: DiagonalMetric, p: ReducedPoint, q: ReducedPoint, opts: ShootingOptions):
        self.warp = metric.warp
        self.p, self.q, self.opts = p, q, opts
        self.phi0, self.psi0, _, _ = self.warp.values(p.rho)
        self.mode = "first" if p.on_first_pole else ("second" if p.on_second_pole else "interior")
        signs = {(su, sv) for su in (1, -1) for sv in (1, -1)}
        self.images = np.unique(np.array([embed(q.rho, su * q.u, sv * q.v) for su, sv in signs]).round(15), axis=0)
        self.evals = 0

    def initial(self, a, b):
        """Unfolded start (rho, u, v, p_rho) and momenta (p_u, p_v)."""
        p = self.p
        ca, sa = math.cos(a), math.sin(a)
        if self.mode == "first":
            return np.array([0.0, p.u, b, ca]), self.phi0 * sa, 0.0
        if self.mode == "second":
            return np.array([HALF_PI, b, p.v, ca]), 0.0, self.psi0 * sa
        return np.array([p.rho, p.u, p.v, ca]), self.phi0 * sa * math.cos(b), self.psi0 * sa * math.sin(b)

    def run(self, x, tol):
        y0, pu, pv = self.initial(x[0], x[1])
        self.evals += 1
        return _integrate_arrays(self.warp, y0, pu, pv, max(float(x[2]), 0.0), tol)

    def residual(self, x, image):
        t, y, status = self.run(x, self.opts.step_tol)
        if status != _OK:
            return np.full(4, 10.0)
        return embed(y[-1, 0], y[-1, 1], y[-1, 2]) - image

    def screen(self, t_max):
        """Closest approaches of a grid of directions; returns starting guesses."""
        o = self.opts
        alphas = (np.arange(o.n_alpha) + 0.5) * math.pi / o.n_alpha
        if self.mode != "interior":
            # from a singular orbit the sign of the surviving angular momentum matters
            alphas = np.concatenate([alphas, alphas + math.pi])
        if self.mode == "interior":
            betas = np.arange(o.n_beta) * 2 * math.pi / o.n_beta
        else:
            betas = (np.arange(o.n_beta) + 0.5) * math.pi / o.n_beta
        found = []
        for a in alphas:
            for b in betas:
                t, y, status = self.run((a, b, t_max), o.screen_tol)
                if len(t) < 2:
                    continue
                pts = embed(y[:, 0], y[:, 1], y[:, 2])
                gaps = np.linalg.norm(pts[:, None, :] - self.images[None, :, :], axis=-1)
                for m in range(len(self.images)):
                    g = gaps[:, m]
                    # local minima along the trajectory
                    idx = np.flatnonzero((g[1:-1] <= g[:-2]) & (g[1:-1] <= g[2:])) + 1
                    if g[-1] < g[-2]:
                        idx = np.append(idx, len(g) - 1)
                    for i in idx:
                        found.append((g[i], t[i], a, b, m))
        found.sort()
        picks = found[: o.n_candidates]
        close = [f for f in found if f[0] < 0.3]
        if close:
            shortest = min(close, key=lambda f: f[1])
            if shortest not in picks:
                picks.append(shortest)
        return [(np.array([a, b, t]), m) for _, t, a, b, m in picks]

    def warm_guess(self, path: np.ndarray):
        """Starting guess from a polyline in reduced coordinates."""
        path = np.asarray(path, dtype=float)
        seg = np.diff(path, axis=0)
        mid = 0.5 * (path[1:, 0] + path[:-1, 0])
        phi, psi, _, _ = self.warp.values(np.clip(mid, 0.0, HALF_PI))
        lens = np.sqrt(seg[:, 0] ** 2 + (phi * seg[:, 1]) ** 2 + (psi * seg[:, 2]) ** 2)
        length = float(np.sum(lens))
        nz = np.flatnonzero(lens > 1e-12)
        if len(nz) == 0:
            return None
        first = nz[0]
        d = seg[first]
        if self.mode == "first":
            a = math.atan2(self.phi0 * d[1], d[0])
            return np.array([a, path[first + 1, 2], length])
        if self.mode == "second":
            a = math.atan2(self.psi0 * d[2], -d[0])
            return np.array([a, path[first + 1, 1], length])
        tr, tu, tv = d[0], self.phi0 * d[1], self.psi0 * d[2]
        a = math.atan2(math.hypot(tu, tv), tr)
        b = math.atan2(tv, tu)
        return np.array([a, b, length])

    def nearest_image(self, x):
        t, y, status = self.run(x, self.opts.screen_tol)
        e = embed(y[-1, 0], y[-1, 1], y[-1, 2])
        return int(np.argmin(np.linalg.norm(self.images - e, axis=1)))

    def solve(self, x0, m):
        res = optimize.least_squares(self.residual, x0, args=(self.images[m],),
                                     bounds=([-np.inf, -np.inf, 0.0], [np.inf, np.inf, np.inf]),
                                     method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                     diff_step=1e-7, max_nfev=200)
        return res.x, float(np.linalg.norm(res.fun))


def _upper_bound(warp: WarpProfile) -> float:
    """Arc length that certainly exceeds the reduced diameter."""
    if warp.is_builtin:
        # g_s <= g_0 and the round reduced space has diameter pi
        return math.pi + 0.05
    grid = np.linspace(0, HALF_PI, 513)
    phi, psi, _, _ = warp.values(grid)
    return HALF_PI + math.pi * (float(np.max(np.abs(phi))) + float(np.max(np.abs(psi)))) + 0.05


def _smooth_shot(metric, p, q, opts):
    sh = _Shooter(metric, p, q, opts)
    t_max = opts.t_max or _upper_bound(metric.warp)
    starts = []
    # straight line in coordinates: catches nearby targets the screening misses
    guesses = [np.array([p.as_array(), q.as_array()])]
    if opts.warm_path is not None:
        guesses.append(opts.warm_path)
    for path in guesses:
        x0 = sh.warm_guess(path)
        if x0 is not None:
            starts.append((x0, sh.nearest_image(x0)))
    starts.extend(sh.screen(t_max))
    best = None
    for x0, m in starts:
        x, r = sh.solve(x0, m)
        if r <= opts.residual_tol and (best is None or x[2] < best[0][2]):
            best = (x, r)
    if best is None:
        raise ConvergenceError(f"shooting from {p} to {q} did not converge ({len(starts)} starts)")
    if sh.mode == "interior":
        # near a singular orbit the two signs of a small angular momentum give
        # nearly equal geodesics, and the screen may only see one of them
        a, b, T = best[0]
        for b2 in (-b, math.pi - b):
            x0 = np.array([a, b2, T])
            x, r = sh.solve(x0, sh.nearest_image(x0))
            if r <= opts.residual_tol and x[2] < best[0][2]:
                best = (x, r)
    x, r = best
    y0, pu, pv = sh.initial(x[0], x[1])
    t, y, _ = _integrate_arrays(metric.warp, y0, pu, pv, x[2], opts.step_tol)
    traj = Trajectory(metric.warp, t, y, pu, pv)
    return float(x[2]), r, traj, sh.evals


def shoot_distance(metric: DiagonalMetric, p: ReducedPoint, q: ReducedPoint,
                   opts: ShootingOptions | None = None) -> DistanceResult:
    """Length of the shortest geodesic found between ``p`` and ``q`` by shooting.

    Smooth geodesics (including those crossing a singular orbit) are searched
    by multi-start least squares; with ``opts.broken`` paths that stop on a
    singular orbit and leave it in another direction are searched as well.
    """
    opts = opts or ShootingOptions()
    if p.canonical() == q.canonical():
        return DistanceResult(0.0, "shooting", 0.0, np.array([p.as_array()]),
                              details={"path_class": "smooth"})
    value, resid, traj, evals = _smooth_shot(metric, p, q, opts)
    err = resid + 10 * opts.step_tol * max(value, 1.0)
    path = traj.folded_positions()
    details = {"path_class": "smooth", "residual": resid, "integrations": evals,
               "p_u": traj.p_u, "p_v": traj.p_v}
    if opts.broken:
        broken = _broken_search(metric, p, q, opts, value)
        if broken is not None and broken[0] < value - err:
            value, err, path = broken[0], broken[1], broken[2]
            details["path_class"] = "broken"
            details["via"] = broken[3]
    return DistanceResult(value, "shooting", err, path, details=details)


def _planar_embed(route, rho, w):
    if route == "first":
        c = np.cos(rho)
        return np.stack([c * np.cos(w), c * np.sin(w), np.sin(rho)], axis=-1)
    s = np.sin(rho)
    return np.stack([s * np.cos(w), s * np.sin(w), np.cos(rho)], axis=-1)


def _planar_shot(metric, route, p, q, opts):
    """Shortest path from p to q that touches one singular orbit.

    Legs leaving ``rho = 0`` carry no v momentum, so such a path lives on the
    surface drho^2 + phi^2 du^2 doubled across rho = 0, from (rho_p, u_p) to
    (-rho_q, u_q), with the v jump taken where it crosses.  The ``second``
    route is the same with psi, v and the reflection rho -> pi - rho.
    """
    warp = metric.warp
    phi0, psi0, _, _ = warp.values(p.rho)
    if route == "first":
        scale, w_p, w_q, rho_t = phi0, p.u, q.u, -q.rho
    else:
        scale, w_p, w_q, rho_t = psi0, p.v, q.v, math.pi - q.rho
    images = np.unique(np.array([_planar_embed(route, rho_t, sw * w_q) for sw in (1, -1)]).round(15), axis=0)

    def run(x, tol):
        ca, sa = math.cos(x[0]), math.sin(x[0])
        if route == "first":
            y0, pu, pv = np.array([p.rho, p.u, p.v, ca]), scale * sa, 0.0
        else:
            y0, pu, pv = np.array([p.rho, p.u, p.v, ca]), 0.0, scale * sa
        t, y, status = _integrate_arrays(warp, y0, pu, pv, max(float(x[1]), 0.0), tol)
        return t, y, status, pu, pv

    def planar(y):
        return _planar_embed(route, y[:, 0], y[:, 1] if route == "first" else y[:, 2])

    def residual(x, m):
        t, y, status, _, _ = run(x, opts.step_tol)
        if status != _OK:
            return np.full(3, 10.0)
        return planar(y[-1:])[0] - images[m]

    t_max = opts.t_max or _upper_bound(warp)
    n_alpha = 2 * opts.n_alpha
    found = []
    for a in (np.arange(n_alpha) + 0.5) * 2 * math.pi / n_alpha:
        t, y, status, _, _ = run((a, t_max), opts.screen_tol)
        if len(t) < 3:
            continue
        pts = planar(y)
        for m in range(len(images)):
            g = np.linalg.norm(pts - images[m], axis=1)
            idx = np.flatnonzero((g[1:-1] <= g[:-2]) & (g[1:-1] <= g[2:])) + 1
            for i in idx:
                found.append((g[i], t[i], a, m))
    found.sort()
    best = None
    for _, t0, a, m in found[: opts.n_candidates]:
        res = optimize.least_squares(residual, np.array([a, t0]), args=(m,),
                                     bounds=([-np.inf, 0.0], [np.inf, np.inf]), method="trf",
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15, diff_step=1e-7, max_nfev=200)
        r = float(np.linalg.norm(res.fun))
        if r <= opts.residual_tol and (best is None or res.x[1] < best[0][1]):
            best = (res.x, r)
    if best is None:
        return None
    x, r = best
    t, y, _, _, _ = run(x, opts.step_tol)
    path = np.stack(fold(y[:, 0], y[:, 1], y[:, 2]), axis=-1)
    # the collapsing angle jumps to the target's value after the crossing
    crossed = (y[:, 0] < 0) if route == "first" else (y[:, 0] > HALF_PI)
    after = np.cumsum(crossed) > 0
    path[after, 2 if route == "first" else 1] = q.v if route == "first" else q.u
    return float(x[1]), r, path


def _broken_search(metric, p, q, opts, incumbent):
    """Shortest path through a singular orbit with a free jump of the collapsing
    angle, if it can beat ``incumbent``.  Returns (value, err, path, label)."""
    best = None
    routes = (("first", p.rho + q.rho, p.on_first_pole or q.on_first_pole),
              ("second", (HALF_PI - p.rho) + (HALF_PI - q.rho), p.on_second_pole or q.on_second_pole))
    for route, lower, trivial in routes:
        # from a point on the orbit itself the jump is already free in the smooth search
        if trivial or lower >= incumbent:
            continue
        shot = _planar_shot(metric, route, p, q, opts)
        if shot is None:
            continue
        value, r, path = shot
        if best is None or value < best[0]:
            err = r + 10 * opts.step_tol * max(value, 1.0)
            best = (value, err, path, f"{route} singular orbit")
    return best
