import json
import math

import numpy as np
import pytest
from conftest import bm_like
from hypothesis import given, settings
from hypothesis import strategies as st

from linfbm import verify as V
from linfbm.errors import DomainError, RefusalError, UsageError
from linfbm.fbm import covariance
from linfbm.grid import TimeGrid
from linfbm.rng import derive_seed

H = 0.75
GRID = TimeGrid.uniform(0.0, 1.0, 4)


def fbm_ensemble(h, n, seed, grid=GRID):
    return V.Ensemble.generate(grid, h, n, seed)


class TestEnsemble:
    def test_rows_follow_derived_seeds(self):
        e = fbm_ensemble(H, 5, 17)
        from linfbm.fbm import sample_fbm

        p = sample_fbm(GRID, H, derive_seed(17, 3))
        np.testing.assert_array_equal(e.values[3], p.values)
        assert e.path(3).seed == derive_seed(17, 3)
        assert [q.seed for q in e.paths] == [derive_seed(17, i) for i in range(5)]

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            V.Ensemble(GRID, np.zeros((3, 4)))

    def test_config_hash_is_key_order_free(self):
        assert V.config_hash({"a": 1, "b": [1, 2]}) == V.config_hash({"b": [1, 2], "a": 1})
        assert V.config_hash({"a": 1}) != V.config_hash({"a": 2})
        assert len(V.config_hash({})) == 16


class TestCovariance:
    def test_zero_ensemble(self):
        e = V.Ensemble(GRID, np.zeros((200, 5)))
        c = V.estimate_covariance(e, 0.5, 1.0)
        assert c == {"estimate": 0.0, "stderr": 0.0}

    def test_too_few_paths(self):
        e = fbm_ensemble(H, 99, 1)
        with pytest.raises(UsageError):
            V.estimate_covariance(e, 0.5, 1.0)

    def test_bootstrap_agrees_with_gaussian_formula(self):
        e = fbm_ensemble(H, 5000, 4)
        c = V.estimate_covariance(e, 0.25, 1.0, bootstrap=400, seed=1)
        assert c["bootstrap_stderr"] == pytest.approx(c["stderr"], rel=0.15)
        assert "bootstrap_stderr" not in V.estimate_covariance(e, 0.25, 1.0)

    def test_stderr_is_honest(self):
        # z-scores of independent covariance estimates have unit spread
        e = fbm_ensemble(H, 200 * 500, 3)
        target = covariance(0.25, 1.0, H)
        z = []
        for block in np.split(e.values, 200):
            c = V.estimate_covariance(V.Ensemble(GRID, block), 0.25, 1.0)
            z.append((c["estimate"] - target) / c["stderr"])
        assert 0.8 <= np.std(z) <= 1.2
        assert abs(np.mean(z)) < 4 / math.sqrt(200)


class TestFbmLaw:
    @pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
    def test_true_law_passes(self, h):
        reports = V.check_fbm_law(fbm_ensemble(h, 20000, 5), h, [(0.25, 1.0), (0.5, 1.0), (1.0, 1.0)])
        assert all(r.passed for r in reports)
        names = {r.statistic_name for r in reports}
        assert {"cov(0.25,1)", "skewness@1", "excess_kurtosis@0.25"} <= names

    def test_brownian_paths_rejected(self):
        # Var of the (0.25, 1) estimate is about 0.004^2 at N = 1e5, so the
        # 0.25 - 0.2377 gap is several standard errors
        e = V.Ensemble(GRID, bm_like(100_000, GRID, 8))
        rep = V.check_fbm_law(e, H, [(0.25, 1.0)])[0]
        assert not rep.passed
        assert rep.z_score > 4

    def test_wrong_hurst_rejected_at_informative_pairs(self):
        e = fbm_ensemble(0.6, 20000, 6)
        reports = V.check_fbm_law(e, 0.9, [(0.25, 0.25), (0.25, 0.5)])
        cov = [r for r in reports if r.statistic_name.startswith("cov")]
        assert not any(r.passed for r in cov)

    def test_blind_pairs(self):
        # R_H(1/2, 1) = 1/2 for every H: that pair cannot see a wrong Hurst index,
        # and (1/4, 1) separates 0.6 from 0.9 by less than one standard error
        assert covariance(0.5, 1.0, 0.6) == pytest.approx(covariance(0.5, 1.0, 0.9))
        e = fbm_ensemble(0.6, 20000, 6)
        rep = {r.statistic_name: r for r in V.check_fbm_law(e, 0.9, [(0.5, 1.0), (0.25, 1.0)])}
        assert rep["cov(0.5,1)"].passed
        gap = abs(covariance(0.25, 1.0, 0.6) - covariance(0.25, 1.0, 0.9))
        assert gap < rep["cov(0.25,1)"].stderr

    def test_non_gaussian_marginals_flagged(self):
        # symmetric +-1 coins scaled to the right variance: covariance passes, kurtosis fails
        rng = np.random.default_rng(0)
        n = 20000
        signs = rng.choice([-1.0, 1.0], size=(n, 1))
        vals = signs * GRID.points ** H
        reports = {r.statistic_name: r for r in V.check_fbm_law(V.Ensemble(GRID, vals), H, [(1.0, 1.0)])}
        assert reports["cov(1,1)"].passed
        assert not reports["excess_kurtosis@1"].passed

    def test_report_invariant(self):
        for r in V.check_fbm_law(fbm_ensemble(H, 500, 9), 0.6, [(0.25, 0.5), (1.0, 1.0)]):
            assert r.passed == (abs(r.z_score) <= r.threshold)
            d = r.to_dict()
            json.dumps(d)
            assert d["n_paths"] == 500


class TestMomentBound:
    @pytest.mark.parametrize("q,value", [(1, math.sqrt(2 / math.pi)), (2, 1.0), (4, 3.0)])
    def test_gaussian_abs_moment(self, q, value):
        assert V.gaussian_abs_moment(q) == pytest.approx(value)

    @pytest.mark.parametrize("q", [2, 4])
    def test_fbm_attains_bound(self, q):
        grid = TimeGrid.uniform(0.0, 1.0, 64)
        e = fbm_ensemble(H, 20000, 12, grid)
        rep = V.check_moment_bound(e, q, H, [2.0**-k for k in range(7)], 1.0)
        assert rep.passed
        assert rep.target == pytest.approx(V.gaussian_abs_moment(q))
        assert rep.z_score >= 0.0
        assert rep.details["one_sided"]

    def test_violation_detected(self):
        grid = TimeGrid.uniform(0.0, 1.0, 64)
        e = fbm_ensemble(H, 5000, 12, grid)
        doubled = V.Ensemble(grid, 2.0 * e.values)
        assert not V.check_moment_bound(doubled, 2, H, [0.5, 1.0], 1.0).passed

    def test_unbounded_m_refused(self):
        with pytest.raises(RefusalError):
            V.check_moment_bound(fbm_ensemble(H, 200, 1), 2, H, [1.0], math.inf)

    def test_order_below_one(self):
        with pytest.raises(UsageError):
            V.check_moment_bound(fbm_ensemble(H, 200, 1), 0.5, H, [1.0], 1.0)


class TestGrowthLaw:
    def test_counterexample_fails(self):
        horizons = [1.0, 10.0, 100.0, 1000.0]
        vals = np.tile(np.array(horizons) ** (2 * H), (50, 1))
        rep = V.growth_law_report(vals, horizons, H)
        assert not rep.passed
        assert rep.z_score is None
        assert rep.estimate == pytest.approx(1.0)

    def test_fbm_passes_and_faster_for_larger_h(self):
        horizons = [1.0, 10.0, 100.0]
        ratios = {}
        for h in (0.6, 0.9):
            rep = V.check_growth_law(h, horizons, 400, 21, steps_per_unit=16, batch=100)
            assert rep.passed, rep.details
            ratios[h] = rep.estimate
        assert ratios[0.9] < ratios[0.6]

    def test_integrand_used(self):
        # M = 0 gives I = 0 and no decay to measure
        rep = V.check_growth_law(H, [1.0, 10.0], 20, 2, integrand=lambda t: 0.0, steps_per_unit=8)
        assert not rep.passed


class TestSuite:
    SMALL = {"base_seed": 5, "tests": [{"name": "fbm_law", "h": 0.75, "n_paths": 500, "n": 16}]}

    def test_empty(self):
        rep = V.run_suite({"tests": []})
        assert rep["passed"] is True
        assert rep["results"] == []

    def test_deterministic(self):
        a, b = V.run_suite(self.SMALL), V.run_suite(self.SMALL)
        for r in (a, b):
            r.pop("timestamp")
            r.pop("elapsed_s")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_seeds_are_derived(self):
        rep = V.run_suite(self.SMALL)
        e = V.Ensemble.generate(TimeGrid.uniform(0.0, 1.0, 16), 0.75, 500, derive_seed(5, 0), "circulant")
        est = V.estimate_covariance(e, 0.25, 1.0)["estimate"]
        assert rep["results"][0]["reports"][0]["estimate"] == est

    def test_logs_each_test(self):
        lines = []
        V.run_suite(self.SMALL, log=lines.append)
        assert len(lines) == 1 and "PASS" in lines[0]

    def test_unknown_test(self):
        with pytest.raises(UsageError):
            V.run_suite({"tests": [{"name": "nope"}]})

    def test_bad_hurst(self):
        with pytest.raises(DomainError):
            V.run_suite({"tests": [{"name": "fbm_law", "h": 0.4}]})

    def test_not_a_config(self):
        with pytest.raises(UsageError):
            V.run_suite([1, 2])

    def test_small_inversion_tests(self):
        cfg = {"base_seed": 1, "tests": [
            {"name": "beta_law", "h": 0.75, "n_paths": 1000, "per_octave": 8},
            {"name": "inversion_drift", "h": 0.75, "n_paths": 1000, "per_octave": 8, "octaves": 10},
            {"name": "moment_bound", "h": 0.75, "integrand_power": 1.0, "n_paths": 1000},
        ]}
        rep = V.run_suite(cfg)
        assert rep["passed"], [r for r in rep["results"] if not r["passed"]]
        beta = rep["results"][0]["reports"][0]
        assert beta["details"]["tail_stderr"] < 1e-3


@settings(max_examples=25, deadline=None)
@given(est=st.floats(-10, 10), target=st.floats(-10, 10), se=st.floats(1e-3, 10))
def test_z_score_sign_and_scale(est, target, se):
    z = V._z(est, target, se)
    assert z == pytest.approx((est - target) / se)
