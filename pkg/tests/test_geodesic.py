import math

import numpy as np
import pytest

from antipode.errors import ParameterError, SingularOrbitError
from antipode.geodesic import GeodesicState, ShootingOptions, integrate_geodesic, shoot_distance, unit_state
from antipode.metrics import DiagonalMetric, SphereShape, WarpProfile
from antipode.oracle import refined_distance
from antipode.reduced import HALF_PI, ReducedPoint, round_distance

from conftest import random_pairs

ROUND = DiagonalMetric.round()
S6 = DiagonalMetric.cheeger(3, 1, 6)
S8 = DiagonalMetric.cheeger(3, 1, 8)


class TestIntegrate:
    def test_pure_rho(self):
        traj = integrate_geodesic(ROUND, GeodesicState(0.1, 0, 0, 1, 0, 0), 0.5)
        assert np.allclose(traj.folded_positions()[-1], (0.6, 0, 0), atol=1e-10)

    def test_equatorial_circle(self):
        traj = integrate_geodesic(ROUND, GeodesicState(HALF_PI, 0, 0, 0, 0, 1), 1.2)
        end = traj.end_state()
        assert end.v == pytest.approx(1.2, abs=1e-10)
        assert end.rho == pytest.approx(HALF_PI, abs=1e-12)

    def test_cheeger_clairaut_drift(self):
        rng = np.random.default_rng(6)
        init = unit_state(S6, ReducedPoint(math.pi / 4), rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        traj = integrate_geodesic(S6, init, 3.0)
        drift = max(max(abs(st.p_u - init.p_u), abs(st.p_v - init.p_v)) for st in traj.states())
        assert drift <= 1e-8
        assert traj.energy_drift() <= 1e-8
        assert traj.length == pytest.approx(3.0, abs=1e-12)

    def test_rejects_non_unit(self):
        with pytest.raises(ParameterError):
            integrate_geodesic(ROUND, GeodesicState(0.3, 0, 0, 2, 0, 0), 1.0)

    def test_rejects_negative_length(self):
        with pytest.raises(ParameterError):
            integrate_geodesic(ROUND, GeodesicState(0.3, 0, 0, 1, 0, 0), -1.0)

    def test_singular_start(self):
        with pytest.raises(SingularOrbitError):
            integrate_geodesic(ROUND, GeodesicState(0.0, 0, 0, 0, 0, 1), 1.0)

    def test_singular_collision(self):
        # heads straight for rho=0 while carrying v-momentum: the psi^2 barrier turns it back,
        # so a collision can only occur with p_v = 0; that case passes through cleanly
        traj = integrate_geodesic(S8, GeodesicState(0.3, 0.2, 0.0, -1, 0, 0), 1.0)
        assert traj.folded_positions()[-1][0] == pytest.approx(0.7, abs=1e-9)

    def test_time_reversal(self):
        rng = np.random.default_rng(3)
        for s in (0.0, 2.0, 8.0):
            metric = DiagonalMetric.cheeger(3, 1, s)
            init = unit_state(metric, ReducedPoint(0.7, 1.0, 2.0), rng.uniform(0.2, 2.9), rng.uniform(0, 6.28))
            fwd = integrate_geodesic(metric, init, 2.0)
            back = integrate_geodesic(metric, fwd.end_state().normalized(metric.warp).reversed(), 2.0)
            assert np.allclose(back.end_state().as_array()[:3], init.as_array()[:3], atol=1e-6)


class TestShooting:
    @pytest.mark.parametrize("u,v", [(0.0, 0.0), (1.0, 2.0), (math.pi, 0.5)])
    def test_round_poles(self, u, v):
        res = shoot_distance(ROUND, ReducedPoint(0.0), ReducedPoint(HALF_PI, u, v))
        assert res.value == pytest.approx(HALF_PI, abs=1e-8)
        assert res.method == "shooting"

    def test_round_antipodal(self):
        res = shoot_distance(ROUND, ReducedPoint(math.pi / 4), ReducedPoint(math.pi / 4, math.pi, math.pi))
        assert res.value == pytest.approx(math.pi, abs=1e-8)

    def test_cheeger_antipodal_matches_grid(self):
        p, q = ReducedPoint(math.pi / 4), ReducedPoint(math.pi / 4, math.pi, math.pi)
        shot = shoot_distance(S6, p, q)
        assert shot.value <= HALF_PI + 1e-9
        assert shot.value == pytest.approx(1.570796326794897, abs=1e-8)
        grid = refined_distance(S6, p, q)
        assert abs(grid.value - shot.value) <= 2e-2

    def test_round_closed_form(self):
        for p, q in random_pairs(11, 20):
            res = shoot_distance(ROUND, p, q)
            assert res.value == pytest.approx(round_distance(p, q), abs=1e-6)
            assert res.value >= abs(p.rho - q.rho) - res.error_estimate

    @pytest.mark.parametrize("p,q,expected", [
        ((0.0, 0.0, 0.0), (0.0, math.pi, 0.0), math.pi / math.sqrt(7)),
        ((0.3, 0.4, 2.0), (1.2, 2.5, 0.1), 1.5669085351448333),
    ])
    def test_frozen_values(self, p, q, expected):
        metric = S6 if p[0] == 0.0 else DiagonalMetric.cheeger(3, 1, 2)
        assert shoot_distance(metric, ReducedPoint(*p), ReducedPoint(*q)).value == pytest.approx(expected, abs=1e-8)

    def test_frozen_large_s(self):
        s16 = DiagonalMetric.cheeger(3, 1, 16)
        val = shoot_distance(s16, ReducedPoint(0.5), ReducedPoint(0.5, math.pi, math.pi)).value
        assert val == pytest.approx(1.0261372036044147, abs=1e-8)
        s50 = DiagonalMetric.cheeger(3, 1, 50)
        val = shoot_distance(s50, ReducedPoint(math.pi / 4), ReducedPoint(math.pi / 4, math.pi, math.pi)).value
        assert val == pytest.approx(0.6161170094005421, abs=1e-8)

    def test_mirror_branch_near_pole(self):
        # the minimizer carries a tiny negative v-momentum; a longer mirror geodesic has a positive one
        p = ReducedPoint(0.30173901598786096, 0.9091764011011668, 3.00908166044161)
        q = ReducedPoint(0.016295925348938395, 2.327750157269491, 2.9697662658170776)
        assert shoot_distance(ROUND, p, q).value == pytest.approx(round_distance(p, q), abs=1e-6)

    def test_symmetry(self):
        metric = DiagonalMetric.cheeger(3, 1, 2)
        for p, q in random_pairs(5, 10):
            assert shoot_distance(metric, p, q).value == pytest.approx(shoot_distance(metric, q, p).value, abs=1e-8)

    def test_same_point(self):
        p = ReducedPoint(0.0, 1.0, 2.0)
        assert shoot_distance(S8, p, ReducedPoint(0.0, 1.0, 0.5)).value == 0.0

    @pytest.mark.parametrize("p,q", [((0.3, 0.0, 0.2), (0.5, 0.0, 2.9)), ((1.2, 0.1, 0.0), (1.3, 2.8, 0.0))])
    def test_broken_paths_round(self, p, q):
        # through-pole minimizers: the closed form is attained across a singular orbit
        p, q = ReducedPoint(*p), ReducedPoint(*q)
        res = shoot_distance(ROUND, p, q)
        assert res.value == pytest.approx(round_distance(p, q), abs=1e-6)
        assert res.details["path_class"] in ("smooth", "broken")

    def test_broken_never_worse(self):
        p, q = ReducedPoint(0.2, 0.3, 0.1), ReducedPoint(0.25, 2.0, 3.0)
        with_broken = shoot_distance(S8, p, q)
        smooth_only = shoot_distance(S8, p, q, ShootingOptions(broken=False))
        assert with_broken.value <= smooth_only.value + 1e-12

    def test_custom_warp_matches_builtin(self):
        s = 4.0
        warp = WarpProfile.custom(lambda r: np.cos(r) / np.sqrt(1 + s * np.cos(r) ** 2),
                                  lambda r: np.sin(r) / np.sqrt(1 + s * np.sin(r) ** 2))
        custom = DiagonalMetric(SphereShape(3, 1), warp)
        builtin = DiagonalMetric.cheeger(3, 1, s)
        p, q = ReducedPoint(0.4, 0.2, 0.3), ReducedPoint(1.0, 2.0, 1.5)
        assert shoot_distance(custom, p, q).value == pytest.approx(shoot_distance(builtin, p, q).value, abs=1e-6)
