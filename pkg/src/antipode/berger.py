"""Berger spheres S^{2q+1}: closed-form diameter, first eigenvalue, and a sampled
estimate of the diameter of the Berger 3-sphere.

The Berger metric g(t) scales the Hopf circles of the unit sphere by t > 0.  On
S^3, viewed as the unit quaternions, the Hopf field is V(p) = i p and

    g_t(X, X) = |X|^2 + (t^2 - 1) <X, V(p)>^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import GraphError, ParameterError

CRITICAL_T = 1.0 / math.sqrt(2.0)
MIN_SAMPLES = 5000
MEAN_DEGREE = 30
GAP_RTOL = 1e-12

# left multiplication by i on quaternions (a, b, c, d) = a + bi + cj + dk
_LEFT_I = np.array([[0.0, -1.0, 0.0, 0.0],
                    [1.0, 0.0, 0.0, 0.0],
                    [0.0, 0.0, 0.0, -1.0],
                    [0.0, 0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class BergerParams:
    q: int = 1
    t: float = 1.0

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ParameterError(f"q must be an integer >= 1, got {self.q}")
        if not (math.isfinite(self.t) and self.t > 0):
            raise ParameterError(f"t must be > 0, got {self.t}")

    @property
    def dimension(self) -> int:
        return 2 * self.q + 1


def berger_diameter(params: BergerParams) -> float:
    """Diameter of (S^{2q+1}, g(t))."""
    t = params.t
    if t <= CRITICAL_T:
        return math.pi / (2.0 * math.sqrt(1.0 - t * t))
    if t <= 1.0:
        return math.pi * t
    return math.pi


def half_hopf(params: BergerParams) -> float:
    """Half the length of a Hopf circle; bounds the antipodal displacement."""
    return math.pi * params.t


def lambda1(params: BergerParams) -> float:
    """First nonzero Laplace eigenvalue of (S^{2q+1}, g(t))."""
    q, t = params.q, params.t
    return min(4.0 * (q + 1), 2.0 * q + 1.0 / (t * t))


def lambda1_switch(q: int) -> float:
    """The t at which the two eigenvalue branches cross."""
    return 1.0 / math.sqrt(2 * q + 4)


def li_functional(params: BergerParams) -> float:
    return lambda1(params) * berger_diameter(params) ** 2


def has_gap(params: BergerParams) -> bool:
    """True iff the half Hopf circle is strictly shorter than the diameter.

    The comparison carries a relative slack of 1e-12 so that the two equal
    branches at t = 1/sqrt(2) do not register as a gap through rounding.
    """
    diam = berger_diameter(params)
    return diam - half_hopf(params) > GAP_RTOL * diam


@dataclass(frozen=True)
class Figure1Row:
    t: float
    diam: float
    half_hopf: float
    gap: bool

    def csv(self) -> str:
        return f"{self.t:.10g},{self.diam:.10g},{self.half_hopf:.10g},{'true' if self.gap else 'false'}"


FIGURE1_HEADER = "t,diam,half_hopf,gap"


def figure1_table(t_grid: Iterable[float]) -> list[Figure1Row]:
    rows = []
    for t in t_grid:
        p = BergerParams(1, float(t))
        rows.append(Figure1Row(p.t, berger_diameter(p), half_hopf(p), has_gap(p)))
    return rows


def t_range(t_min: float, t_max: float, t_step: float) -> list[float]:
    """Inclusive arithmetic grid without accumulated rounding drift."""
    if not (t_step > 0 and t_max >= t_min):
        raise ParameterError(f"bad t range: min={t_min}, max={t_max}, step={t_step}")
    n = int(math.floor((t_max - t_min) / t_step + 1e-9))
    return [round(t_min + i * t_step, 12) for i in range(n + 1)]


# --------------------------------------------------------------------------
# sampled diameter of the Berger 3-sphere

@dataclass(frozen=True)
class S3Estimate:
    """``value`` is the longest relaxed path to the graph-farthest samples; the
    true diameter lies in [value - relax_error, value + coverage] up to sampling
    luck.  ``graph_value`` is the raw graph eccentricity."""

    value: float
    error_estimate: float
    graph_value: float
    epsilon: float
    mean_degree: float
    coverage: float
    n_samples: int


def sample_s3(n_samples: int, seed: int) -> np.ndarray:
    """Seeded uniform unit quaternions; row 0 is replaced by the identity."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x[0] = (1.0, 0.0, 0.0, 0.0)
    return x


def arc_length(p: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
    """Berger length of the round great arc from p to q (rows of unit quaternions).

    Along a great circle the vertical component <gamma', i gamma> is constant,
    so the length is exact: theta * sqrt(1 + (t^2-1) <q, ip>^2 / sin^2 theta),
    which is the log-map weight |Delta|^2 + (t^2-1)<Delta, V(p)>^2 under a root.
    """
    c = np.clip(np.sum(p * q, axis=-1), -1.0, 1.0)
    a = np.sum(q * (p @ _LEFT_I.T), axis=-1)
    theta = np.arccos(c)
    s2 = np.maximum(1.0 - c * c, 1e-300)
    return theta * np.sqrt(np.maximum(1.0 + (t * t - 1.0) * a * a / s2, 0.0))


def _energy_and_grad(z: np.ndarray, ends: tuple, t: float):
    a0, b0 = ends
    raw = z.reshape(-1, 4)
    norm = np.linalg.norm(raw, axis=1, keepdims=True)
    inner = raw / norm
    X = np.vstack([a0, inner, b0])
    p, q = X[:-1], X[1:]
    k = t * t - 1.0
    c = np.clip(np.sum(p * q, axis=1), -1.0 + 1e-15, 1.0 - 1e-15)
    a = np.sum(q * (p @ _LEFT_I.T), axis=1)
    s2 = 1.0 - c * c
    theta = np.arccos(c)
    f = 1.0 + k * a * a / s2
    n = len(p)
    energy = n * float(np.sum(theta * theta * f))
    dF_dc = 2.0 * theta * (-1.0 / np.sqrt(s2)) * f + theta * theta * k * a * a * 2.0 * c / (s2 * s2)
    dF_da = theta * theta * 2.0 * k * a / s2
    g = np.zeros_like(X)
    g[:-1] += dF_dc[:, None] * q + dF_da[:, None] * (q @ _LEFT_I)
    g[1:] += dF_dc[:, None] * p + dF_da[:, None] * (p @ _LEFT_I.T)
    gi = n * g[1:-1]
    gi = (gi - np.sum(gi * inner, axis=1, keepdims=True) * inner) / norm
    return energy, gi.ravel()


def relax_s3_path(path: np.ndarray, t: float, levels: int = 3, maxiter: int = 2000):
    """Shorten a polyline of unit quaternions with fixed ends; returns (length, path, change)."""
    P = np.asarray(path, dtype=float)
    lengths = [float(np.sum(arc_length(P[:-1], P[1:], t)))]
    for level in range(levels):
        if level:
            mid = P[:-1] + P[1:]
            mid /= np.linalg.norm(mid, axis=1, keepdims=True)
            Q = np.empty((2 * len(P) - 1, 4))
            Q[0::2], Q[1::2] = P, mid
            P = Q
        if len(P) > 2:
            ends = (P[0], P[-1])
            res = optimize.minimize(_energy_and_grad, P[1:-1].ravel(), args=(ends, t), jac=True,
                                    method="L-BFGS-B", options={"maxiter": maxiter})
            inner = res.x.reshape(-1, 4)
            P = np.vstack([P[0], inner / np.linalg.norm(inner, axis=1, keepdims=True), P[-1]])
        lengths.append(float(np.sum(arc_length(P[:-1], P[1:], t))))
    return lengths[-1], P, abs(lengths[-1] - lengths[-2])


def _ball_epsilon(n: int, t: float, degree: float) -> float:
    # a small g_t ball has round volume (4/3) pi eps^3 / t out of 2 pi^2
    return (degree * 2.0 * math.pi ** 2 * t / (n * 4.0 * math.pi / 3.0)) ** (1.0 / 3.0)


def s3_numeric_diameter(t: float, n_samples: int = 20000, seed: int = 0,
                        mean_degree: float = MEAN_DEGREE, source: int = 0, top: int = 8) -> S3Estimate:
    """Diameter of the Berger 3-sphere from a sampled neighbourhood graph.

    Samples are joined when their g_t arc length is at most epsilon, with
    epsilon tuned to the requested mean degree.  Edge weights are exact lengths
    of great arcs, so every graph path is a real curve.  By homogeneity one
    source suffices.  The Dijkstra paths to the ``top`` farthest samples are
    then shortened by energy relaxation, removing the zig-zag excess of graph
    paths; the longest relaxed path is the estimate.
    """
    params = BergerParams(1, t)
    if n_samples < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    if not 0 <= source < n_samples:
        raise ParameterError(f"source {source} out of range")
    x = sample_s3(n_samples, seed)
    tree = cKDTree(x)
    eps = _ball_epsilon(n_samples, params.t, mean_degree)
    for _ in range(4):
        # g_t >= min(t,1)^2 times round, so round radius eps/min(t,1) covers the g_t ball
        reach = min(eps / min(params.t, 1.0), math.pi)
        pairs = tree.query_pairs(2.0 * math.sin(reach / 2.0), output_type="ndarray")
        w = arc_length(x[pairs[:, 0]], x[pairs[:, 1]], params.t)
        keep = w <= eps
        degree = 2.0 * np.count_nonzero(keep) / n_samples
        if degree > 0 and abs(degree / mean_degree - 1.0) < 0.05:
            break
        eps *= (mean_degree / max(degree, 1.0)) ** (1.0 / 3.0)
    pairs, w = pairs[keep], w[keep]
    graph = coo_matrix((w, (pairs[:, 0], pairs[:, 1])), shape=(n_samples, n_samples)).tocsr()
    dist, pred = dijkstra(graph, directed=False, indices=source, return_predecessors=True)
    if not np.all(np.isfinite(dist)):
        missing = int(np.count_nonzero(~np.isfinite(dist)))
        raise GraphError(f"neighbourhood graph is disconnected ({missing} samples unreachable); "
                         "increase n_samples or mean_degree")
    graph_value = float(dist.max())
    best, relax_err = 0.0, 0.0
    for far in np.argsort(-dist, kind="stable")[:top]:
        nodes = [int(far)]
        while nodes[-1] != source:
            nodes.append(int(pred[nodes[-1]]))
        length, _, change = relax_s3_path(x[nodes[::-1]], params.t)
        if length > best:
            best, relax_err = length, change
    # mean spacing of the samples in the g_t metric (volume 2 pi^2 t)
    coverage = (2.0 * math.pi ** 2 * params.t / n_samples) ** (1.0 / 3.0)
    return S3Estimate(best, coverage + relax_err, graph_value, eps, degree, coverage, n_samples)
