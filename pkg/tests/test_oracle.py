import math

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from antipode.errors import GridError, ParameterError
from antipode.geodesic import shoot_distance
from antipode.metrics import DiagonalMetric
from antipode.oracle import build_grid, grid_distance, refined_distance, single_source
from antipode.reduced import HALF_PI, ReducedPoint

from conftest import random_pairs

ROUND = DiagonalMetric.round()
S8 = DiagonalMetric.cheeger(3, 1, 8)
POLE_A, POLE_B = ReducedPoint(0.0), ReducedPoint(HALF_PI)
ANTI_A, ANTI_B = ReducedPoint(math.pi / 4), ReducedPoint(math.pi / 4, math.pi, math.pi)


@pytest.fixture(scope="module")
def round129():
    return build_grid(ROUND, 129)


def _csgraph(graph):
    src, dst, wt = graph.edge_arrays()
    n = graph.box_size
    return coo_matrix((wt, (src, dst)), shape=(n, n)).tocsr()


class TestBuild:
    def test_small_round(self):
        g = build_grid(ROUND, 17)
        assert g.node_count <= 17 ** 3
        dist = single_source(g, g.index(0, 0, 0))
        assert np.all(np.isfinite(dist[g.nodes()]))
        ncomp, labels = connected_components(_csgraph(g), directed=False)
        assert len(set(labels[g.nodes()])) == 1

    def test_pure_rho_weight(self):
        g = build_grid(ROUND, (33, 17, 21))
        hr = g.spacing[0]
        assert np.all(g.weights[1::2, 0, 0] == hr)

    def test_pure_u_weight_cheeger(self):
        g = build_grid(DiagonalMetric.cheeger(3, 1, 6), 17)
        hu = g.spacing[1]
        assert g.weights[16, 1, 0] == pytest.approx(0.3535533905932738 * hu, rel=1e-14)
        src, dst, wt = g.edge_arrays()
        a = g.node_coords(src)
        b = g.node_coords(dst)
        sel = (a[:, 0] == math.pi / 4) & (b[:, 0] == math.pi / 4) & (a[:, 2] == b[:, 2]) \
            & (np.abs(np.abs(a[:, 1] - b[:, 1]) - hu) < 1e-12)
        assert sel.sum() > 0
        assert np.allclose(wt[sel], math.sqrt(2) / 4 * hu, rtol=1e-14)

    def test_edges_positive(self):
        _, _, wt = build_grid(S8, 17).edge_arrays()
        assert np.all(wt > 0)

    def test_too_small(self):
        with pytest.raises(ParameterError):
            build_grid(ROUND, 9)

    def test_budget(self):
        with pytest.raises(GridError, match="nodes"):
            build_grid(ROUND, 65, max_nodes=1000)

    def test_dump_deterministic(self):
        a = build_grid(S8, 17).dump()
        b = build_grid(S8, 17).dump()
        assert a == b
        assert set(a) == {"resolution", "nodes", "edges", "weight_sum", "checksum"}
        assert a != build_grid(ROUND, 17).dump()


class TestDijkstra:
    @pytest.mark.parametrize("metric", [ROUND, S8])
    @pytest.mark.parametrize("res", [17, (17, 21, 19)])
    def test_matches_scipy(self, metric, res):
        g = build_grid(metric, res)
        ref = dijkstra(_csgraph(g), directed=False, indices=[g.index(0, 3, 0), g.index(5, 2, 7)])
        nodes = g.nodes()
        for row, src in zip(ref, (g.index(0, 3, 0), g.index(5, 2, 7))):
            ours = single_source(g, src)
            assert np.allclose(ours[nodes], row[nodes], rtol=0, atol=1e-12)

    def test_astar_matches_plain(self):
        g = build_grid(S8, 33)
        s, t = g.index(3, 4, 5), g.index(30, 28, 2)
        assert g.shortest(s, t, astar=True)[0][t] == pytest.approx(g.shortest(s, t, astar=False)[0][t], abs=1e-12)

    def test_triangle_inequality(self):
        g = build_grid(S8, 33)
        rng = np.random.default_rng(8)
        nodes = rng.choice(g.nodes(), 30, replace=False)
        dist = {int(n): single_source(g, int(n)) for n in nodes}
        for _ in range(1000):
            a, b, c = (int(x) for x in rng.choice(nodes, 3, replace=False))
            assert dist[a][c] <= dist[a][b] + dist[b][c] + 1e-12


class TestGridDistance:
    def test_round_poles(self, round129):
        assert grid_distance(round129, POLE_A, POLE_B).value == pytest.approx(HALF_PI, abs=2e-2)

    def test_round_antipodal(self, round129):
        res = grid_distance(round129, ANTI_A, ANTI_B)
        assert res.value == pytest.approx(math.pi, abs=3e-2)
        assert res.method == "grid"

    def test_cheeger_antipodal(self):
        assert grid_distance(build_grid(S8, 129), ANTI_A, ANTI_B).value <= math.pi / math.sqrt(5) + 3e-2

    def test_upper_bound_vs_shooting(self):
        g = build_grid(S8, 65)
        for p, q in random_pairs(21, 5):
            assert grid_distance(g, p, q).value >= shoot_distance(S8, p, q).value - 1e-3

    def test_cheeger_monotone(self):
        pairs = random_pairs(22, 30)
        graphs = [build_grid(DiagonalMetric.cheeger(3, 1, s), 33) for s in (0.0, 2.0, 8.0)]
        for p, q in pairs:
            vals = [grid_distance(g, p, q).value for g in graphs]
            assert vals[1] <= vals[0] + 2e-2 and vals[2] <= vals[1] + 2e-2

    def test_projection_bound(self):
        g = build_grid(S8, 33)
        for p, q in random_pairs(23, 100):
            assert grid_distance(g, p, q).projection_bound_holds(p, q)


class TestRefined:
    def test_round_poles(self):
        res = refined_distance(ROUND, POLE_A, POLE_B, [65, 129])
        assert res.value == pytest.approx(HALF_PI, abs=1e-9)
        assert res.error_estimate <= 1e-2
        assert res.method == "refined"

    def test_resolution_checks(self):
        with pytest.raises(ParameterError):
            refined_distance(ROUND, POLE_A, POLE_B, [65])
        with pytest.raises(ParameterError):
            refined_distance(ROUND, POLE_A, POLE_B, [65, 33])

    def test_frozen_s8_pair(self):
        p = ReducedPoint(0.19634954084936207, 0.0, math.pi)
        q = ReducedPoint(1.325359400733194, math.pi, 0.0)
        res = refined_distance(S8, p, q)
        assert res.value == pytest.approx(1.7108014170699308, abs=1e-7)
        assert abs(res.value - shoot_distance(S8, p, q).value) <= res.error_estimate

    def test_monotone_in_resolution(self):
        # points on the coarse lattice are also fine-lattice nodes, so no snapping enters
        rng = np.random.default_rng(24)
        coarse, fine = build_grid(S8, 65), build_grid(S8, 129)
        hr, hu, hv = coarse.spacing
        for _ in range(5):
            p, q = (ReducedPoint(rng.integers(65) * hr, rng.integers(65) * hu, rng.integers(65) * hv) for _ in "pq")
            assert grid_distance(coarse, p, q).value >= grid_distance(fine, p, q).value - 1e-3
