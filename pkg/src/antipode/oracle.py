"""Grid-graph distance oracle for the reduced space.

The box [0, pi/2] x [0, pi] x [0, pi] is sampled on a uniform grid, every node
is joined to its 26 Moore neighbours, and each edge gets the midpoint-rule
length sqrt(drho^2 + phi(rho_m)^2 du^2 + psi(rho_m)^2 dv^2).  The faces rho = 0
and rho = pi/2 are singular orbits: all nodes (0, j, *) are one node, and so
are all nodes (N_rho - 1, *, k).

Lattice shortest paths carry a direction-dependent metrication error (up to
roughly ten percent for a 26-stencil) that does not shrink with the grid
spacing.  :func:`refined_distance` therefore relaxes the lattice path by
minimizing the discrete path energy with the endpoints held fixed; the result is
the length of an explicit path, so it is still an upper bound up to quadrature.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import optimize

from .errors import GridError, ParameterError
from .metrics import DiagonalMetric, WarpProfile, cheeger_values
from .reduced import HALF_PI, DistanceResult, ReducedPoint

MIN_RESOLUTION = 17
DEFAULT_RESOLUTION = 129
ANISOTROPY_CONSTANT = 2.0
DEFAULT_MAX_NODES = 1 << 23
MONOTONE_SLACK = 1e-3
# margin against midpoint-rule edge weights dipping below the true segment length
HEURISTIC_SAFETY = 0.99
RELAX_FTOL = 1e-10
RELAX_GTOL = 1e-7


# --------------------------------------------------------------------------
# numba kernels

@nb.njit(cache=True)
def _sift_up(heap, pos, key, i):
    node = heap[i]
    kn = key[node]
    while i > 0:
        p = (i - 1) >> 1
        hp = heap[p]
        if key[hp] <= kn:
            break
        heap[i] = hp
        pos[hp] = i
        i = p
    heap[i] = node
    pos[node] = i


@nb.njit(cache=True)
def _pop(heap, pos, key, size):
    top = heap[0]
    pos[top] = -2
    size -= 1
    if size > 0:
        node = heap[size]
        kn = key[node]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= size:
                break
            if c + 1 < size and key[heap[c + 1]] < key[heap[c]]:
                c += 1
            if key[heap[c]] >= kn:
                break
            heap[i] = heap[c]
            pos[heap[c]] = i
            i = c
        heap[i] = node
        pos[node] = i
    return top, size


@nb.njit(cache=True)
def _neighbors(x, nr, nu, nv, W, nbr, wts):
    """Fill ``nbr``/``wts`` with the neighbours of canonical node ``x``."""
    plane = nu * nv
    last = nr - 1
    i = x // plane
    r = x - i * plane
    j = r // nv
    k = r - j * nv
    cnt = 0
    if i == 0:
        # collapsed node (0, j, *)
        for dj in (-1, 1):
            jj = j + dj
            if 0 <= jj < nu:
                nbr[cnt] = jj * nv
                wts[cnt] = W[0, 1, 0]
                cnt += 1
        for dj in range(-1, 2):
            jj = j + dj
            if jj < 0 or jj >= nu:
                continue
            w = W[1, abs(dj), 0]
            base = plane + jj * nv
            for kk in range(nv):
                nbr[cnt] = base + kk
                wts[cnt] = w
                cnt += 1
    elif i == last:
        # collapsed node (last, *, k)
        for dk in (-1, 1):
            kk = k + dk
            if 0 <= kk < nv:
                nbr[cnt] = last * plane + kk
                wts[cnt] = W[2 * last, 0, 1]
                cnt += 1
        for dk in range(-1, 2):
            kk = k + dk
            if kk < 0 or kk >= nv:
                continue
            w = W[2 * last - 1, 0, abs(dk)]
            base = (last - 1) * plane + kk
            for jj in range(nu):
                nbr[cnt] = base + jj * nv
                wts[cnt] = w
                cnt += 1
    else:
        for di in range(-1, 2):
            ii = i + di
            m = i + ii
            if ii == 0:
                for dj in range(-1, 2):
                    jj = j + dj
                    if 0 <= jj < nu:
                        nbr[cnt] = jj * nv
                        wts[cnt] = W[m, abs(dj), 0]
                        cnt += 1
            elif ii == last:
                for dk in range(-1, 2):
                    kk = k + dk
                    if 0 <= kk < nv:
                        nbr[cnt] = last * plane + kk
                        wts[cnt] = W[m, 0, abs(dk)]
                        cnt += 1
            else:
                for dj in range(-1, 2):
                    jj = j + dj
                    if jj < 0 or jj >= nu:
                        continue
                    for dk in range(-1, 2):
                        if di == 0 and dj == 0 and dk == 0:
                            continue
                        kk = k + dk
                        if kk < 0 or kk >= nv:
                            continue
                        nbr[cnt] = ii * plane + jj * nv + kk
                        wts[cnt] = W[m, abs(dj), abs(dk)]
                        cnt += 1
    return cnt


@nb.njit(cache=True)
def _dijkstra(nr, nu, nv, W, src, tgt, limit, scale):
    """Shortest paths from ``src`` on the implicit grid graph.

    With a target and ``scale`` > 0 the search is A* with the heuristic
    max(|drho|, scale * round distance).  ``scale`` must not exceed the square
    root of the smallest ratio between the metric and the round one; the
    heuristic is then consistent and the target distance equals the Dijkstra
    value.
    """
    n = nr * nu * nv
    plane = nu * nv
    hr = 0.5 * np.pi / (nr - 1)
    hu = np.pi / (nu - 1)
    hv = np.pi / (nv - 1)
    astar = tgt >= 0 and scale > 0.0
    ctr = str_ = cu = su = cv = sv = 0.0
    tr = 0.0
    if astar:
        ti = tgt // plane
        tj = (tgt - ti * plane) // nv
        tk = tgt - ti * plane - tj * nv
        tr = ti * hr
        ctr, str_ = np.cos(tr), np.sin(tr)
        cu, su = np.cos(tj * hu), np.sin(tj * hu)
        cv, sv = np.cos(tk * hv), np.sin(tk * hv)
    dist = np.full(n, np.inf)
    key = np.full(n, np.inf) if astar else dist
    pred = np.full(n, -1, np.int32)
    pos = np.full(n, -1, np.int32)
    heap = np.empty(n, np.int32)
    nbr = np.empty(3 * max(nu, nv) + 27, np.int64)
    wts = np.empty(3 * max(nu, nv) + 27)
    dist[src] = 0.0
    key[src] = 0.0
    heap[0] = src
    pos[src] = 0
    size = 1
    while size > 0:
        x, size = _pop(heap, pos, key, size)
        if x == tgt:
            break
        dx = dist[x]
        if dx > limit:
            break
        cnt = _neighbors(x, nr, nu, nv, W, nbr, wts)
        for e in range(cnt):
            y = nbr[e]
            nd = dx + wts[e]
            if nd < dist[y]:
                dist[y] = nd
                if astar:
                    yi = y // plane
                    yj = (y - yi * plane) // nv
                    yk = y - yi * plane - yj * nv
                    rho = yi * hr
                    c = (np.cos(rho) * ctr * (np.cos(yj * hu) * cu + np.sin(yj * hu) * su)
                         + np.sin(rho) * str_ * (np.cos(yk * hv) * cv + np.sin(yk * hv) * sv))
                    c = min(1.0, max(-1.0, c))
                    h = max(scale * np.arccos(c), abs(rho - tr))
                    key[y] = nd + h
                pred[y] = x
                if pos[y] == -1:
                    heap[size] = y
                    pos[y] = size
                    _sift_up(heap, pos, key, size)
                    size += 1
                elif pos[y] >= 0:
                    _sift_up(heap, pos, key, pos[y])
    return dist, pred


@nb.njit(cache=True)
def _canon(nr, nu, nv, i, j, k):
    if i == 0:
        return j * nv
    if i == nr - 1:
        return (nr - 1) * nu * nv + k
    return (i * nu + j) * nv + k


@nb.njit(cache=True)
def _enumerate_edges(nr, nu, nv, W, emit, cap):
    """Enumerate undirected edges by scanning member pairs of the full box.

    Written independently of the Dijkstra neighbour logic: every pair of
    Moore-adjacent box points is mapped to canonical nodes, and parallel edges
    between the same canonical pair keep the smallest weight.  Returns
    (count, weight_sum, src, dst, weight); arrays are filled only if ``emit``.
    """
    src = np.empty(cap if emit else 0, np.int64)
    dst = np.empty(cap if emit else 0, np.int64)
    wt = np.empty(cap if emit else 0, np.float64)
    count = 0
    total = 0.0
    for i in range(nr):
        for j in range(nu):
            for k in range(nv):
                a = _canon(nr, nu, nv, i, j, k)
                for di in (0, 1):
                    ii = i + di
                    if ii >= nr:
                        continue
                    for dj in range(-1, 2):
                        jj = j + dj
                        if jj < 0 or jj >= nu:
                            continue
                        for dk in range(-1, 2):
                            kk = k + dk
                            if kk < 0 or kk >= nv:
                                continue
                            # half of the stencil, so each box pair is seen once
                            if di == 0 and (dj < 0 or (dj == 0 and dk <= 0)):
                                continue
                            b = _canon(nr, nu, nv, ii, jj, kk)
                            if a == b:
                                continue
                            w = W[i + ii, abs(dj), abs(dk)]
                            # keep only the minimal representative of parallel edges:
                            # pole faces collapse a whole row, and the cheapest member
                            # pair is the one with no motion in the collapsed angle
                            if ii == 0 and dk != 0:
                                continue
                            if i == 0 and dk != 0:
                                continue
                            if ii == nr - 1 and dj != 0:
                                continue
                            if i == nr - 1 and dj != 0:
                                continue
                            # on a pole face itself, a single representative per pair
                            if i == 0 and ii == 0 and k != 0:
                                continue
                            if i == nr - 1 and ii == nr - 1 and j != 0:
                                continue
                            # a pole node meets each off-pole node through one member only
                            if i == 0 and ii == 1 and k != kk:
                                continue
                            if ii == nr - 1 and i == nr - 2 and j != jj:
                                continue
                            if emit:
                                src[count] = a
                                dst[count] = b
                                wt[count] = w
                            count += 1
                            total += w
    return count, total, src, dst, wt


# --------------------------------------------------------------------------
# graph object

def _midpoint_warp(warp: WarpProfile, rho):
    if warp.is_builtin:
        phi, psi, _, _ = cheeger_values(rho, warp.deformation)
    else:
        phi, psi, _, _ = warp.values(rho)
    return np.asarray(phi, dtype=float), np.asarray(psi, dtype=float)


def _normalize_resolution(resolution):
    if np.ndim(resolution) == 0:
        resolution = (int(resolution),) * 3
    res = tuple(int(r) for r in resolution)
    if len(res) != 3:
        raise ParameterError(f"resolution must be an int or a triple, got {resolution!r}")
    if min(res) < MIN_RESOLUTION:
        raise ParameterError(f"each resolution component must be >= {MIN_RESOLUTION}, got {res}")
    return res


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Immutable implicit grid graph; edges are generated on the fly."""

    metric: DiagonalMetric
    resolution: tuple
    weights: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> tuple[float, float, float]:
        nr, nu, nv = self.resolution
        return HALF_PI / (nr - 1), math.pi / (nu - 1), math.pi / (nv - 1)

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def node_count(self) -> int:
        nr, nu, nv = self.resolution
        return (nr - 2) * nu * nv + nu + nv

    @property
    def box_size(self) -> int:
        nr, nu, nv = self.resolution
        return nr * nu * nv

    def index(self, i: int, j: int, k: int) -> int:
        """Canonical node id of grid point (i, j, k)."""
        nr, nu, nv = self.resolution
        return int(_canon(nr, nu, nv, int(i), int(j), int(k)))

    def node_ijk(self, idx: int) -> tuple[int, int, int]:
        _, nu, nv = self.resolution
        i, r = divmod(int(idx), nu * nv)
        j, k = divmod(r, nv)
        return i, j, k

    def node_coords(self, idx) -> np.ndarray:
        """Reduced coordinates of canonical nodes; the undefined pole angle is NaN."""
        nr, nu, nv = self.resolution
        hr, hu, hv = self.spacing
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        i, r = np.divmod(idx, nu * nv)
        j, k = np.divmod(r, nv)
        out = np.stack([i * hr, j * hu, k * hv], axis=-1).astype(float)
        out[i == 0, 2] = np.nan
        out[i == nr - 1, 1] = np.nan
        out[i == nr - 1, 0] = HALF_PI
        return out

    def node_point(self, idx: int) -> ReducedPoint:
        rho, u, v = self.node_coords(idx)[0]
        return ReducedPoint(rho, 0.0 if np.isnan(u) else u, 0.0 if np.isnan(v) else v)

    def nodes(self) -> np.ndarray:
        """All canonical node ids."""
        nr, nu, nv = self.resolution
        plane = nu * nv
        inner = np.arange(plane, (nr - 1) * plane, dtype=np.int64)
        first = np.arange(nu, dtype=np.int64) * nv
        second = (nr - 1) * plane + np.arange(nv, dtype=np.int64)
        return np.concatenate([first, inner, second])

    def singular_nodes(self) -> np.ndarray:
        nr, nu, nv = self.resolution
        first = np.arange(nu, dtype=np.int64) * nv
        second = (nr - 1) * nu * nv + np.arange(nv, dtype=np.int64)
        return np.concatenate([first, second])

    def snap(self, p: ReducedPoint) -> tuple[int, float]:
        """Nearest canonical node and an upper bound on the reduced distance to it."""
        nr, nu, nv = self.resolution
        hr, hu, hv = self.spacing
        i = int(round(p.rho / hr))
        j = int(round(p.u / hu))
        k = int(round(p.v / hv))
        idx = self.index(i, j, k)
        node = self.node_coords(idx)[0]
        drho = abs(node[0] - p.rho)
        du = 0.0 if (np.isnan(node[1]) or p.on_second_pole) else abs(node[1] - p.u)
        dv = 0.0 if (np.isnan(node[2]) or p.on_first_pole) else abs(node[2] - p.v)
        phi_p, psi_p = _midpoint_warp(self.metric.warp, p.rho)
        phi_n, psi_n = _midpoint_warp(self.metric.warp, node[0])
        # move in rho then the angles, or the angles then rho
        err = min(drho + phi_n * du + psi_n * dv, phi_p * du + psi_p * dv + drho)
        return idx, float(err)

    def edge_arrays(self):
        """Explicit (src, dst, weight) arrays; for small grids and cross-checks."""
        nr, nu, nv = self.resolution
        count, _, _, _, _ = _enumerate_edges(nr, nu, nv, self.weights, False, 0)
        _, _, src, dst, wt = _enumerate_edges(nr, nu, nv, self.weights, True, count)
        return src, dst, wt

    def edge_count(self) -> int:
        nr, nu, nv = self.resolution
        count, _, _, _, _ = _enumerate_edges(nr, nu, nv, self.weights, False, 0)
        return int(count)

    def dump(self) -> dict:
        """Node count, edge count and a checksum, for debugging."""
        nr, nu, nv = self.resolution
        count, total, _, _, _ = _enumerate_edges(nr, nu, nv, self.weights, False, 0)
        digest = hashlib.sha256()
        digest.update(repr(self.resolution).encode())
        digest.update(np.ascontiguousarray(self.weights).tobytes())
        digest.update(f"{int(count)}:{total:.17g}".encode())
        return {
            "resolution": list(self.resolution),
            "nodes": self.node_count,
            "edges": int(count),
            "weight_sum": float(total),
            "checksum": digest.hexdigest()[:16],
        }

    @property
    def heuristic_scale(self) -> float:
        """Safe A* scale: the metric dominates (1+s)^-1 times the round one."""
        if not self.metric.warp.is_builtin:
            return 0.0
        return HEURISTIC_SAFETY / math.sqrt(1.0 + self.metric.warp.deformation)

    def shortest(self, src: int, tgt: int = -1, limit: float = math.inf, astar: bool = True):
        nr, nu, nv = self.resolution
        scale = self.heuristic_scale if astar else 0.0
        return _dijkstra(nr, nu, nv, self.weights, int(src), int(tgt), float(limit), scale)

    def path_nodes(self, pred: np.ndarray, src: int, tgt: int) -> list[int]:
        path = [int(tgt)]
        while path[-1] != src:
            nxt = int(pred[path[-1]])
            if nxt < 0:
                raise GridError("target unreachable; grid graph is disconnected")
            path.append(nxt)
        return path[::-1]


def build_grid(metric: DiagonalMetric, resolution=DEFAULT_RESOLUTION,
               max_nodes: int = DEFAULT_MAX_NODES) -> GridGraph:
    """Discretize the reduced metric on a uniform grid (see module docstring)."""
    res = _normalize_resolution(resolution)
    nr, nu, nv = res
    if nr * nu * nv > max_nodes:
        nodes = (nr - 2) * nu * nv + nu + nv
        raise GridError(f"grid {res} has {nodes} nodes (~{13 * nodes} edges), over the budget of {max_nodes}")
    hr, hu, hv = HALF_PI / (nr - 1), math.pi / (nu - 1), math.pi / (nv - 1)
    m = np.arange(2 * nr - 1)
    rho_mid = m * hr / 2
    phi, psi = _midpoint_warp(metric.warp, rho_mid)
    drho = (m % 2) * hr
    W = np.empty((2 * nr - 1, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            W[:, a, b] = np.sqrt(drho ** 2 + (phi * a * hu) ** 2 + (psi * b * hv) ** 2)
    if not np.all(np.isfinite(W)):
        raise GridError("non-finite edge weight")
    # same-orbit zero-motion entries are never used; pure-angle edges must be positive
    used = W.copy()
    used[0::2, 0, 0] = 1.0
    used[0, 0, 1] = 1.0  # v-moves on the rho=0 face are collapsed
    used[-1, 1, 0] = 1.0  # u-moves on the rho=pi/2 face are collapsed
    if np.any(used[:, :, :] <= 0):
        raise GridError("warp vanishes inside (0, pi/2); edge weights must be positive")
    W.setflags(write=False)
    return GridGraph(metric, res, W)


# --------------------------------------------------------------------------
# queries

def _grid_polyline(graph: GridGraph, nodes: list[int]) -> np.ndarray:
    return graph.node_coords(np.asarray(nodes, dtype=np.int64))


def grid_distance(graph: GridGraph, source: ReducedPoint, target: ReducedPoint) -> DistanceResult:
    """Dijkstra distance between the grid nodes nearest to ``source`` and ``target``."""
    s, snap_s = graph.snap(source)
    t, snap_t = graph.snap(target)
    if s == t:
        path = np.array([graph.node_coords(s)[0]])
        value = 0.0
    else:
        dist, pred = graph.shortest(s, t)
        value = float(dist[t])
        assert math.isfinite(value), "grid graph is connected by construction"
        path = _grid_polyline(graph, graph.path_nodes(pred, s, t))
    err = snap_s + snap_t + ANISOTROPY_CONSTANT * graph.h
    return DistanceResult(value, "grid", err, path,
                          details={"resolution": graph.resolution, "snap": (snap_s, snap_t)})


def single_source(graph: GridGraph, source: int) -> np.ndarray:
    """Distances from canonical node ``source`` to every box index (inf off-node)."""
    dist, _ = graph.shortest(source)
    return dist


# --------------------------------------------------------------------------
# path relaxation

def _fill_pole_angles(path: np.ndarray, p: ReducedPoint, q: ReducedPoint):
    """Replace NaN pole angles, duplicating interior pole vertices.

    A vertex on a singular orbit may be entered and left with different values
    of the collapsed angle at no cost; it becomes two vertices joined by a
    zero-length segment.  Returns the expanded path and a mask of coordinates
    that must stay fixed.
    """
    pts = [np.array(x, dtype=float) for x in path]
    pts[0] = np.array(p.as_array())
    pts[-1] = np.array(q.as_array())
    out = []
    for idx, x in enumerate(pts):
        prev_pt = pts[idx - 1] if idx > 0 else None
        next_pt = pts[idx + 1] if idx + 1 < len(pts) else None
        for col in (1, 2):
            if np.isnan(x[col]):
                before = prev_pt[col] if prev_pt is not None and not np.isnan(prev_pt[col]) else None
                after = next_pt[col] if next_pt is not None and not np.isnan(next_pt[col]) else None
                if before is not None and after is not None and before != after:
                    a, b = x.copy(), x.copy()
                    a[col], b[col] = before, after
                    out.extend([a, b])
                    break
                x = x.copy()
                x[col] = before if before is not None else (after if after is not None else 0.0)
        else:
            out.append(x)
    out = np.array(out)
    fixed = np.zeros_like(out, dtype=bool)
    fixed[0] = True
    fixed[-1] = True
    # the undefined angle of a pole endpoint is free
    if p.on_first_pole:
        fixed[0, 2] = False
    if p.on_second_pole:
        fixed[0, 1] = False
    if q.on_first_pole:
        fixed[-1, 2] = False
    if q.on_second_pole:
        fixed[-1, 1] = False
    return out, fixed


def _subdivide(path: np.ndarray, fixed: np.ndarray, factor: int):
    if factor <= 1:
        return path, fixed
    segs = []
    masks = []
    for a, b, fa in zip(path[:-1], path[1:], fixed[:-1]):
        t = np.arange(factor)[:, None] / factor
        segs.append(a + t * (b - a))
        mk = np.zeros((factor, 3), dtype=bool)
        mk[0] = fa
        masks.append(mk)
    segs.append(path[-1:])
    masks.append(fixed[-1:])
    return np.vstack(segs), np.vstack(masks)


def _warp_sq(warp: WarpProfile, rho):
    if warp.is_builtin:
        phi, psi, dphi, dpsi = cheeger_values(rho, warp.deformation)
    else:
        phi, psi, dphi, dpsi = warp.values(rho)
    return phi * phi, psi * psi, 2 * phi * dphi, 2 * psi * dpsi


def path_length(warp: WarpProfile, path: np.ndarray) -> float:
    """Midpoint-rule length of a polyline in reduced coordinates."""
    d = np.diff(path, axis=0)
    m = 0.5 * (path[1:, 0] + path[:-1, 0])
    A, B, _, _ = _warp_sq(warp, m)
    return float(np.sum(np.sqrt(d[:, 0] ** 2 + A * d[:, 1] ** 2 + B * d[:, 2] ** 2)))


def _minimize_energy(warp: WarpProfile, path: np.ndarray, fixed: np.ndarray, maxiter: int,
                     ftol: float = RELAX_FTOL, gtol: float = RELAX_GTOL):
    template = path.copy()
    free = ~fixed
    # diagonal preconditioning: angles measured in local arc length
    A0, B0, _, _ = _warp_sq(warp, np.clip(path[:, 0], 0.0, HALF_PI))
    scale = np.stack([np.ones(len(path)), np.sqrt(np.maximum(A0, 4e-4)),
                      np.sqrt(np.maximum(B0, 4e-4))], axis=1)[free]
    hi = np.broadcast_to(np.array([HALF_PI, math.pi, math.pi]), path.shape)[free]
    bounds = list(zip(np.zeros(hi.size), hi * scale))
    nseg = len(path) - 1

    def energy(z):
        pts = template.copy()
        pts[free] = z / scale
        d = np.diff(pts, axis=0)
        m = 0.5 * (pts[1:, 0] + pts[:-1, 0])
        A, B, dA, dB = _warp_sq(warp, m)
        du2, dv2 = d[:, 1] ** 2, d[:, 2] ** 2
        e = d[:, 0] ** 2 + A * du2 + B * dv2
        g = np.zeros_like(pts)
        half = 0.5 * (dA * du2 + dB * dv2)
        g[1:, 0] += 2 * d[:, 0] + half
        g[:-1, 0] += -2 * d[:, 0] + half
        g[1:, 1] += 2 * A * d[:, 1]
        g[:-1, 1] -= 2 * A * d[:, 1]
        g[1:, 2] += 2 * B * d[:, 2]
        g[:-1, 2] -= 2 * B * d[:, 2]
        return nseg * float(np.sum(e)), nseg * g[free] / scale

    z0 = np.clip(path[free], 0.0, hi) * scale
    res = optimize.minimize(energy, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": maxiter, "ftol": ftol, "gtol": gtol, "maxcor": 30})
    out = template.copy()
    out[free] = np.clip(res.x / scale, 0.0, hi)
    return out


def _coarsen(path: np.ndarray, fixed: np.ndarray, segments: int):
    """Keep about ``segments`` evenly spaced vertices plus both ends of pole jumps."""
    n = len(path)
    keep = np.zeros(n, dtype=bool)
    keep[np.unique(np.linspace(0, n - 1, segments + 1).round().astype(int))] = True
    jump = np.zeros(n - 1, dtype=bool)
    on_first = path[:, 0] == 0.0
    on_second = path[:, 0] == HALF_PI
    jump |= on_first[:-1] & on_first[1:] & (path[:-1, 2] != path[1:, 2])
    jump |= on_second[:-1] & on_second[1:] & (path[:-1, 1] != path[1:, 1])
    keep[:-1] |= jump
    keep[1:] |= jump
    return path[keep], fixed[keep]


def relax_path(warp: WarpProfile, path: np.ndarray, p: ReducedPoint, q: ReducedPoint,
               min_segments: int = 64, coarse_segments: int = 12, maxiter: int = 4000):
    """Shorten a lattice path to a discrete geodesic between the exact endpoints.

    Relaxation runs coarse to fine, doubling the vertex count each level.
    Returns (length, path, discretization_error) where the error compares the
    final length with the one from the previous level.
    """
    pts, fixed = _fill_pole_angles(np.asarray(path, dtype=float), p, q)
    if len(pts) < 2:
        pts = np.vstack([pts, pts])
        fixed = np.vstack([fixed, fixed])
    if len(pts) - 1 > coarse_segments:
        pts, fixed = _coarsen(pts, fixed, coarse_segments)
    pts = _minimize_energy(warp, pts, fixed, maxiter)
    lengths = [path_length(warp, pts)]
    while len(pts) - 1 < 2 * min_segments:
        pts, fixed = _subdivide(pts, fixed, 2)
        pts = _minimize_energy(warp, pts, fixed, maxiter)
        lengths.append(path_length(warp, pts))
    return lengths[-1], pts, abs(lengths[-1] - lengths[-2]) if len(lengths) > 1 else 0.0


def refined_distance(metric: DiagonalMetric, p: ReducedPoint, q: ReducedPoint,
                     resolutions=(65, 129), graphs: dict | None = None) -> DistanceResult:
    """Grid distances at increasing resolutions, each lattice path relaxed.

    The value is the shortest relaxed path; the error estimate is the spread of
    the relaxed lengths across resolutions plus their discretization errors.
    """
    resolutions = list(resolutions)
    if len(resolutions) < 2:
        raise ParameterError("refined_distance needs at least two resolutions")
    sizes = [_normalize_resolution(r) for r in resolutions]
    if any(np.prod(b) <= np.prod(a) or any(y < x for x, y in zip(a, b)) for a, b in zip(sizes, sizes[1:])):
        raise ParameterError(f"resolutions must be strictly increasing, got {resolutions}")
    raw, relaxed, disc, paths = [], [], [], []
    warnings = []
    for res in sizes:
        graph = graphs.get(res) if graphs else None
        if graph is None:
            graph = build_grid(metric, res)
            if graphs is not None:
                graphs[res] = graph
        g = grid_distance(graph, p, q)
        raw.append(g.value)
        if g.value == 0.0 and p == q:
            relaxed.append(0.0)
            disc.append(0.0)
            paths.append(np.array([p.as_array()]))
            continue
        length, rpath, derr = relax_path(metric.warp, g.path, p, q)
        relaxed.append(length)
        disc.append(derr)
        paths.append(rpath)
    for coarse, fine, rc, rf in zip(raw, raw[1:], sizes, sizes[1:]):
        if fine > coarse + MONOTONE_SLACK:
            warnings.append(f"grid distance increased from {coarse:.6g} at {rc} to {fine:.6g} at {rf}")
    best = int(np.argmin(relaxed))
    err = abs(relaxed[-1] - relaxed[-2]) + max(disc)
    return DistanceResult(relaxed[best], "refined", err, paths[best],
                          details={"grid_values": raw, "relaxed_values": relaxed,
                                   "resolutions": sizes}, warnings=warnings)
