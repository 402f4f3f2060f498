import json
import math

import numpy as np
import pytest

from antipode import analysis
from antipode.analysis import (AmbientPoint, DistanceOptions, clear_caches, collapse_curve, default_jobs,
                               displacement_profile, distance, estimate_diameter, reduce_pair, refine_levels,
                               verify_theorem)
from antipode.errors import DomainError, ParameterError
from antipode.metrics import DiagonalMetric, SphereShape, orbit_diameter
from antipode.reduced import HALF_PI, ReducedPoint, round_distance

ROUND = DiagonalMetric.round()
FAST = 65


def unit(v):
    v = np.asarray(v, dtype=float)
    return AmbientPoint(tuple(v / np.linalg.norm(v)))


class TestAmbient:
    def test_non_unit(self):
        with pytest.raises(DomainError):
            AmbientPoint((1.0, 1.0, 0.0, 0.0))

    def test_examples(self):
        shape = SphereShape(3, 1)
        e1, e4 = unit([1, 0, 0, 0]), unit([0, 0, 0, 1])
        assert reduce_pair(shape, e1, e4) == (0.0, HALF_PI, 0.0, 0.0)
        assert reduce_pair(shape, e1, unit([0, 1, 0, 0])) == pytest.approx((0.0, 0.0, HALF_PI, 0.0))
        p = unit([0.3, -0.4, 0.5, 0.2])
        q = AmbientPoint(tuple(-np.array(p.coordinates)))
        rp, rq, a, b = reduce_pair(shape, p, q)
        assert rp == pytest.approx(rq, abs=1e-15)
        assert (a, b) == pytest.approx((math.pi, math.pi), abs=1e-7)

    def test_wrong_dimension(self):
        with pytest.raises(DomainError):
            reduce_pair(SphereShape(4, 1), unit([1, 0, 0, 0]), unit([0, 1, 0, 0]))

    @pytest.mark.parametrize("n,k", [(3, 1), (4, 1), (4, 2), (5, 2)])
    def test_round_reduction_preserves_distance(self, n, k):
        rng = np.random.default_rng(n * 10 + k)
        shape = SphereShape(n, k)
        for _ in range(50):
            p, q = unit(rng.standard_normal(n + 1)), unit(rng.standard_normal(n + 1))
            rp, rq, a, b = reduce_pair(shape, p, q)
            ambient = math.acos(np.clip(np.dot(p.coordinates, q.coordinates), -1, 1))
            assert round_distance(ReducedPoint(rp), ReducedPoint(rq, a, b)) == pytest.approx(ambient, abs=1e-9)


class TestDistance:
    def test_round_poles(self):
        res = distance(ROUND, ReducedPoint(0.0), ReducedPoint(HALF_PI))
        assert res.value == pytest.approx(HALF_PI, abs=1e-9)

    def test_round_law_of_cosines(self):
        p, q = ReducedPoint(math.pi / 3), ReducedPoint(math.pi / 4, 1.0, 0.5)
        exact = math.acos(math.cos(math.pi / 3) * math.cos(math.pi / 4) * math.cos(1.0)
                          + math.sin(math.pi / 3) * math.sin(math.pi / 4) * math.cos(0.5))
        for opts in (DistanceOptions(), DistanceOptions(shooting=True)):
            assert distance(ROUND, p, q, opts).value == pytest.approx(exact, abs=2e-2)

    def test_fused_cheeger(self):
        s8 = DiagonalMetric.cheeger(3, 1, 8)
        res = distance(s8, ReducedPoint(math.pi / 4), ReducedPoint(math.pi / 4, math.pi, math.pi),
                       DistanceOptions(shooting=True))
        assert res.value <= math.pi / math.sqrt(5) + 2e-2
        assert res.value == pytest.approx(1.4049629462081452, abs=1e-6)
        assert res.warnings == []
        engines = res.details["engines"]
        assert abs(engines["shooting"] - engines["refined"]) <= 1e-3


class TestProfiles:
    def test_round_displacement(self):
        prof = displacement_profile(ROUND, [0.0, 0.4, math.pi / 4, HALF_PI], FAST, jobs=1)
        for sample in prof:
            assert sample.displacement == pytest.approx(math.pi, abs=2e-2)

    def test_cheeger_displacement(self):
        s6 = DiagonalMetric.cheeger(3, 1, 6)
        rhos = [0.0, 0.3, math.pi / 4, 1.2]
        prof = displacement_profile(s6, rhos, FAST, jobs=1)
        assert prof[0].displacement <= math.pi / math.sqrt(7) + 2e-2
        assert prof[2].displacement <= HALF_PI + 2e-2
        for sample in prof:
            assert sample.displacement <= orbit_diameter(s6, sample.rho) + sample.error_estimate + 1e-9

    def test_s8_pole_displacement(self):
        prof = displacement_profile(DiagonalMetric.cheeger(3, 1, 8), [0.0], FAST, jobs=1)
        assert prof[0].displacement == pytest.approx(math.pi / 3, abs=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            displacement_profile(ROUND, [2.0], FAST)

    def test_refine_levels(self):
        assert refine_levels(129) == ((65, 65, 65), (129, 129, 129))
        with pytest.raises(ParameterError):
            refine_levels(17)

    def test_round_diameter(self):
        est = estimate_diameter(ROUND, FAST, jobs=1)
        assert est.lower >= math.pi - 3e-2

    def test_s8_diameter(self):
        est = estimate_diameter(DiagonalMetric.cheeger(3, 1, 8), FAST, jobs=1)
        assert est.lower >= HALF_PI - 2e-2
        assert est.upper_hint < math.pi
        assert est.certified == HALF_PI

    def test_cache_reuse_is_exact(self):
        metric = DiagonalMetric.cheeger(3, 1, 3)
        first = displacement_profile(metric, [0.2, 0.9], 33, jobs=1)
        clear_caches()
        again = displacement_profile(DiagonalMetric.cheeger(5, 2, 3), [0.2, 0.9], 33, jobs=1)
        assert first == again


class TestVerify:
    def test_round_skips_gap(self):
        rep = verify_theorem(SphereShape(3, 1), 0.0, resolution=FAST, jobs=1)
        status = {c.name: c.status for c in rep.checks}
        assert status == {"diameter_lower_bound": "pass", "max_displacement": "pass",
                          "strict_gap": "skipped", "smoothness": "pass"}
        assert rep.overall_pass

    def test_report_json(self):
        rep = verify_theorem(SphereShape(3, 1), 8.0, resolution=FAST, jobs=1)
        doc = json.loads(json.dumps(rep.to_json()))
        assert set(doc) >= {"metric", "checks", "overall_pass", "runtime_seconds", "resolution", "tolerance"}
        assert doc["metric"] == {"n": 3, "k": 1, "family": "cheeger", "s": 8.0}
        for check in doc["checks"]:
            assert set(check) == {"name", "measured", "bound", "relation", "pass", "status"}
        assert doc["overall_pass"] is True
        assert rep.check("max_displacement").bound == pytest.approx(math.pi / math.sqrt(5) + 0.02)

    def test_failure_is_reported(self):
        # a wide tolerance closes the gap between displacement and diameter
        rep = verify_theorem(SphereShape(3, 1), 8.0, tol=0.5, resolution=33, jobs=1)
        assert rep.check("strict_gap").passed is False
        assert not rep.overall_pass

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            verify_theorem(SphereShape(3, 1), -1.0)
        with pytest.raises(ParameterError):
            verify_theorem(SphereShape(3, 1), 1.0, tol=0.0)


class TestCollapse:
    def test_examples(self):
        vals = dict(collapse_curve([0, 6, 198]))
        assert vals[0] == math.pi
        assert vals[6] == pytest.approx(HALF_PI, abs=1e-15)
        assert vals[198] == pytest.approx(math.pi / 10, abs=1e-15)

    def test_decreasing(self):
        vals = [v for _, v in collapse_curve(np.linspace(0, 1e6, 200))]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.01

    def test_negative(self):
        with pytest.raises(ParameterError):
            collapse_curve([1.0, -0.1])


def test_default_jobs(monkeypatch):
    monkeypatch.setenv("ANTIPODE_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.setenv("ANTIPODE_JOBS", "zero")
    with pytest.raises(ParameterError):
        default_jobs()
    monkeypatch.delenv("ANTIPODE_JOBS")
    assert default_jobs() >= 1
