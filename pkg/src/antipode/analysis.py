"""Ambient-to-reduced reduction, fused distances, displacement and diameter sweeps,
and the diameter-versus-displacement verification report."""

from __future__ import annotations

import math
import os
import time
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, ParameterError
from .geodesic import ShootingOptions, shoot_distance
from .metrics import DiagonalMetric, SphereShape, WarpProfile, max_orbit_diameter, smoothness_check
from .oracle import (ANISOTROPY_CONSTANT, DEFAULT_RESOLUTION, MIN_RESOLUTION, build_grid,
                     refined_distance, single_source, _normalize_resolution)
from .reduced import HALF_PI, DistanceResult, ReducedPoint

UNIT_TOL = 1e-12
DEFAULT_TOL = 0.02
DISPLACEMENT_POINTS = 65
SWEEP_RESOLUTION = 33
INTERIOR_SAMPLES = 8
REFINE_TOP = 3
GAP_THRESHOLD = 6.0

DisplacementSample = namedtuple("DisplacementSample", "rho displacement error_estimate")


# --------------------------------------------------------------------------
# ambient points

@dataclass(frozen=True)
class AmbientPoint:
    coordinates: tuple

    def __post_init__(self):
        x = np.asarray(self.coordinates, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise DomainError("ambient point needs a finite coordinate vector")
        norm = float(np.linalg.norm(x))
        if abs(norm - 1.0) > UNIT_TOL:
            raise DomainError(f"ambient point is not a unit vector (norm {norm!r})")
        object.__setattr__(self, "coordinates", tuple(float(c) for c in x))

    @property
    def dimension(self) -> int:
        """n for a point of S^n."""
        return len(self.coordinates) - 1


def _block_angle(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    c = float(np.dot(a, b) / (na * nb))
    return math.acos(min(1.0, max(-1.0, c)))


def reduce_pair(shape: SphereShape, p: AmbientPoint, q: AmbientPoint) -> tuple[float, float, float, float]:
    """Orbit data (rho_p, rho_q, a, b) of a pair of points of S^n.

    The distance between p and q equals the reduced distance from (rho_p, 0, 0)
    to (rho_q, a, b), where a and b are the angles between the unit x-blocks and
    between the unit y-blocks (0 when a block vanishes).
    """
    for pt in (p, q):
        if pt.dimension != shape.n:
            raise DomainError(f"point in R^{pt.dimension + 1} does not lie on S^{shape.n}")
    kx = shape.k + 1
    x_p, y_p = np.array(p.coordinates[:kx]), np.array(p.coordinates[kx:])
    x_q, y_q = np.array(q.coordinates[:kx]), np.array(q.coordinates[kx:])
    rho_p = math.atan2(np.linalg.norm(y_p), np.linalg.norm(x_p))
    rho_q = math.atan2(np.linalg.norm(y_q), np.linalg.norm(x_q))
    return rho_p, rho_q, _block_angle(x_p, x_q), _block_angle(y_p, y_q)


# --------------------------------------------------------------------------
# fused distance

@dataclass
class DistanceOptions:
    resolutions: tuple = (65, DEFAULT_RESOLUTION)
    shooting: bool = False
    shooting_options: Optional[ShootingOptions] = None


def distance(metric: DiagonalMetric, p: ReducedPoint, q: ReducedPoint,
             opts: DistanceOptions | None = None, graphs: dict | None = None) -> DistanceResult:
    """Reduced distance from the grid engine, optionally cross-checked by shooting.

    The smaller value wins.  When the engines agree within their combined error
    estimates the tighter estimate is kept, otherwise a warning is attached and
    the error estimate covers the disagreement.
    """
    opts = opts or DistanceOptions()
    grid = refined_distance(metric, p, q, opts.resolutions, graphs=graphs)
    if not opts.shooting:
        return grid
    sopts = opts.shooting_options or ShootingOptions()
    if sopts.warm_path is None and grid.path is not None and len(grid.path) > 1:
        sopts = ShootingOptions(**{**sopts.__dict__, "warm_path": grid.path})
    try:
        shot = shoot_distance(metric, p, q, sopts)
    except ConvergenceError as exc:
        grid.warnings.append(f"shooting failed, grid value kept: {exc}")
        return grid
    gap = abs(shot.value - grid.value)
    combined = shot.error_estimate + grid.error_estimate
    winner = shot if shot.value <= grid.value else grid
    warnings = list(grid.warnings) + list(shot.warnings)
    if gap > combined:
        warnings.append(f"engines disagree: shooting {shot.value:.10g}, grid {grid.value:.10g} "
                        f"(gap {gap:.3g} > combined error {combined:.3g})")
        err = max(winner.error_estimate, gap)
    else:
        err = min(shot.error_estimate, grid.error_estimate)
    details = dict(winner.details)
    details["engines"] = {"shooting": shot.value, "refined": grid.value}
    return DistanceResult(winner.value, winner.method, err, winner.path, details=details, warnings=warnings)


# --------------------------------------------------------------------------
# sweeps

def default_jobs() -> int:
    env = os.environ.get("ANTIPODE_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise ParameterError(f"ANTIPODE_JOBS must be an integer, got {env!r}") from None
        if jobs < 1:
            raise ParameterError(f"ANTIPODE_JOBS must be >= 1, got {jobs}")
        return jobs
    return os.cpu_count() or 1


def _pmap(fn, items, jobs: int | None, picklable: bool = True):
    jobs = default_jobs() if jobs is None else jobs
    items = list(items)
    if jobs <= 1 or not picklable or len(items) < 2:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, *zip(*items)))


def refine_levels(resolution) -> tuple:
    """(coarse, fine) resolutions for refined distances at a given fine resolution."""
    fine = _normalize_resolution(resolution)
    coarse = tuple(max(MIN_RESOLUTION, (r + 1) // 2) for r in fine)
    if coarse == fine:
        raise ParameterError(f"resolution {resolution} leaves no coarser level >= {MIN_RESOLUTION}")
    return coarse, fine


def _displacement_at(warp: WarpProfile, rho: float, levels: tuple) -> DisplacementSample:
    metric = DiagonalMetric(SphereShape(3, 1), warp)
    d = refined_distance(metric, ReducedPoint(rho, 0.0, 0.0), ReducedPoint(rho, math.pi, math.pi),
                         levels, graphs=_graphs(warp))
    return DisplacementSample(float(rho), d.value, d.error_estimate)


@lru_cache(maxsize=16)
def _graphs(warp: WarpProfile) -> dict:
    # per-process cache of grid graphs; building is cheap but not free
    return {}


# reduced-space results keyed by (warp, inputs); the sphere shape never enters
_DISPLACEMENTS: dict = {}
_DIAMETERS: dict = {}


def _displacement_cached(warp: WarpProfile, rhos: tuple, levels: tuple, jobs: int):
    key = (warp, rhos, levels)
    if key not in _DISPLACEMENTS:
        _DISPLACEMENTS[key] = tuple(_pmap(_displacement_at, [(warp, r, levels) for r in rhos],
                                          jobs, warp.is_builtin))
    return _DISPLACEMENTS[key]


def displacement_profile(metric: DiagonalMetric, rho_grid: Sequence[float],
                         resolution=DEFAULT_RESOLUTION, jobs: int | None = None) -> list[DisplacementSample]:
    """Distance from (rho, 0, 0) to its antipode (rho, pi, pi) for each rho.

    Results depend only on the warp, so they are shared between sphere shapes.
    """
    rhos = tuple(float(r) for r in rho_grid)
    for r in rhos:
        if not (-1e-12 <= r <= HALF_PI + 1e-12):
            raise DomainError(f"rho={r} outside [0, pi/2]")
    rhos = tuple(min(max(r, 0.0), HALF_PI) for r in rhos)
    jobs = default_jobs() if jobs is None else jobs
    return list(_displacement_cached(metric.warp, rhos, refine_levels(resolution), jobs))


@dataclass(frozen=True)
class DiameterEstimate:
    """Sampled diameter bounds.  Only ``lower`` is meant as a bound; ``upper_hint``
    is the largest raw grid distance plus the lattice allowance."""

    lower: float
    upper_hint: float
    certified: float
    sweep_max: float
    refined: float
    refined_error: float
    pair: tuple
    sweep_resolution: tuple


def _eccentricity(warp: WarpProfile, res: tuple, src: int):
    graph = build_grid(DiagonalMetric(SphereShape(3, 1), warp), res)
    dist = single_source(graph, src)
    finite = np.where(np.isfinite(dist), dist, -1.0)
    tgt = int(np.argmax(finite))
    return float(finite[tgt]), tgt


def _sweep_sources(graph) -> np.ndarray:
    nr, nu, nv = graph.resolution
    ii = np.unique(np.linspace(1, nr - 2, INTERIOR_SAMPLES).round().astype(int))
    jj = np.unique(np.linspace(0, nu - 1, INTERIOR_SAMPLES).round().astype(int))
    kk = np.unique(np.linspace(0, nv - 1, INTERIOR_SAMPLES).round().astype(int))
    interior = [graph.index(i, j, k) for i in ii for j in jj for k in kk]
    return np.concatenate([graph.singular_nodes(), np.array(interior, dtype=np.int64)])


def _diameter_cached(warp: WarpProfile, levels: tuple, sweep: tuple, jobs: int) -> DiameterEstimate:
    key = (warp, levels, sweep)
    if key not in _DIAMETERS:
        _DIAMETERS[key] = _diameter_sweep(warp, levels, sweep, jobs)
    return _DIAMETERS[key]


def _diameter_sweep(warp: WarpProfile, levels: tuple, sweep: tuple, jobs: int) -> DiameterEstimate:
    metric = DiagonalMetric(SphereShape(3, 1), warp)
    graph = build_grid(metric, sweep)
    sources = _sweep_sources(graph)
    ecc = _pmap(_eccentricity, [(warp, sweep, int(s)) for s in sources], jobs, warp.is_builtin)
    values = np.array([e[0] for e in ecc])
    sweep_max = float(values.max())
    order = np.argsort(-values, kind="stable")
    pairs, seen = [], set()
    for i in order:
        key = tuple(sorted((int(sources[i]), ecc[i][1])))
        if key not in seen:
            seen.add(key)
            pairs.append(key)
        if len(pairs) == REFINE_TOP:
            break
    best = None
    for a, b in pairs:
        p, q = graph.node_point(a), graph.node_point(b)
        d = refined_distance(metric, p, q, levels, graphs=_graphs(warp))
        if best is None or d.value - d.error_estimate > best[0].value - best[0].error_estimate:
            best = (d, p, q)
    d, p, q = best
    # (0,0,0) and (pi/2,0,0) lie exactly pi/2 apart for every diagonal metric:
    # the rho-line realizes the projection bound
    certified = HALF_PI
    lower = max(certified, d.value - d.error_estimate)
    upper_hint = sweep_max + ANISOTROPY_CONSTANT * graph.h
    return DiameterEstimate(lower, upper_hint, certified, sweep_max, d.value, d.error_estimate,
                            (p, q), graph.resolution)


def estimate_diameter(metric: DiagonalMetric, resolution=DEFAULT_RESOLUTION,
                      sweep_resolution=SWEEP_RESOLUTION, jobs: int | None = None) -> DiameterEstimate:
    """Diameter bounds from eccentricity sweeps on a coarse grid.

    Sources are all singular-orbit nodes plus an 8x8x8 interior sample; the
    farthest pairs found are re-measured with refined distances at
    ``resolution``.
    """
    levels = refine_levels(resolution)
    sweep = tuple(min(a, b) for a, b in zip(_normalize_resolution(sweep_resolution), levels[1]))
    jobs = default_jobs() if jobs is None else jobs
    return _diameter_cached(metric.warp, levels, sweep, jobs)


def clear_caches() -> None:
    """Drop all memoized reduced-space results (graphs, sweeps, profiles)."""
    _graphs.cache_clear()
    _DISPLACEMENTS.clear()
    _DIAMETERS.clear()


# --------------------------------------------------------------------------
# verification report

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    bound: float
    relation: str
    passed: Optional[bool]

    @property
    def status(self) -> str:
        if self.passed is None:
            return SKIPPED
        return PASS if self.passed else FAIL


@dataclass
class VerificationReport:
    metric: dict
    checks: list
    resolution: tuple
    tolerance: float
    runtime_seconds: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def overall_pass(self) -> bool:
        """True iff no check failed; skipped checks do not count."""
        return all(c.passed is not False for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def measured(self) -> dict:
        return {c.name: c.measured for c in self.checks}

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "checks": [{"name": c.name, "measured": c.measured, "bound": c.bound,
                        "relation": c.relation, "pass": c.passed, "status": c.status}
                       for c in self.checks],
            "overall_pass": self.overall_pass,
            "runtime_seconds": self.runtime_seconds,
            "resolution": list(self.resolution),
            "tolerance": self.tolerance,
            "diagnostics": self.diagnostics,
        }


def verify_theorem(shape: SphereShape, s: float, tol: float = DEFAULT_TOL,
                   resolution=DEFAULT_RESOLUTION, jobs: int | None = None) -> VerificationReport:
    """Check diam >= pi/2, max displacement <= pi/sqrt(1+s/2), and (for s > 6)
    that the displacement stays strictly below the diameter."""
    if not (math.isfinite(s) and s >= 0):
        raise ParameterError(f"s must be >= 0, got {s}")
    if not tol > 0:
        raise ParameterError(f"tolerance must be positive, got {tol}")
    start = time.perf_counter()
    metric = DiagonalMetric.cheeger(shape.n, shape.k, s)
    res = _normalize_resolution(resolution)
    diam = estimate_diameter(metric, res, jobs=jobs)
    rhos = np.linspace(0.0, HALF_PI, DISPLACEMENT_POINTS)
    profile = displacement_profile(metric, rhos, res, jobs=jobs)
    i_max = int(np.argmax([d.displacement for d in profile]))
    disp_max = profile[i_max].displacement
    bound = max_orbit_diameter(metric)[1]
    smooth = smoothness_check(metric.warp)

    checks = [
        Check("diameter_lower_bound", diam.lower, HALF_PI - tol, ">=", diam.lower >= HALF_PI - tol),
        Check("max_displacement", disp_max, bound + tol, "<=", disp_max <= bound + tol),
    ]
    if s > GAP_THRESHOLD:
        checks.append(Check("strict_gap", disp_max + tol, diam.lower, "<", disp_max + tol < diam.lower))
    else:
        checks.append(Check("strict_gap", disp_max + tol, diam.lower, "<", None))
    worst = max(smooth.residuals.values())
    checks.append(Check("smoothness", worst, smooth.tol, "<=", smooth.passed))

    diagnostics = {
        "diameter_upper_hint": diam.upper_hint,
        "diameter_refined": diam.refined,
        "diameter_refined_error": diam.refined_error,
        "diameter_certified": diam.certified,
        "diameter_sweep_max": diam.sweep_max,
        "diameter_pair": [list(pt.canonical()) for pt in diam.pair],
        "displacement_argmax_rho": profile[i_max].rho,
        "displacement_error": profile[i_max].error_estimate,
        "orbit_diameter_bound": bound,
    }
    family = metric.warp.family
    report = VerificationReport(
        metric={"n": shape.n, "k": shape.k, "family": family, "s": float(s)},
        checks=checks, resolution=res, tolerance=float(tol), diagnostics=diagnostics)
    report.runtime_seconds = time.perf_counter() - start
    return report


def collapse_curve(s_values: Sequence[float]) -> list[tuple[float, float]]:
    """Largest orbit diameter pi/sqrt(1+s/2) for each Cheeger parameter."""
    out = []
    for s in s_values:
        s = float(s)
        if not (math.isfinite(s) and s >= 0):
            raise ParameterError(f"s must be >= 0, got {s}")
        out.append((s, math.pi / math.sqrt(1.0 + s / 2.0)))
    return out
