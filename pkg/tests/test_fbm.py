import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linfbm import fbm
from linfbm.errors import DomainError, SingularityError, UsageError
from linfbm.fbm import (
    CirculantFallbackWarning,
    HurstParam,
    cov_matrix,
    covariance,
    covariance_via_kernel,
    is_psd,
    kernel_phi,
    sample_fbm,
    sample_fbm_ensemble,
)
from linfbm.grid import TimeGrid
from linfbm.rng import derive_seeds
from linfbm.verify import Ensemble, check_fbm_law, estimate_covariance

times = st.floats(min_value=0.0, max_value=50.0, allow_nan=False)
hursts = st.floats(min_value=0.501, max_value=0.999)


class TestHurstParam:
    @pytest.mark.parametrize("h", [0.51, 0.75, 0.99])
    def test_accepts_open_interval(self, h):
        assert HurstParam(h).h == h

    @pytest.mark.parametrize("h", [0.5, 1.0, 0.4, -1.0, float("nan")])
    def test_rejects_outside(self, h):
        with pytest.raises(DomainError, match=r"\(1/2, 1\)"):
            HurstParam(h)


class TestCovariance:
    def test_unit_variance(self):
        assert covariance(1.0, 1.0, 0.75) == 1.0

    def test_hand_value(self, oracles):
        # 0.5 * (1 + 0.25^1.5 - 0.75^1.5)
        assert covariance(0.25, 1.0, 0.75) == pytest.approx(oracles["covariance_0.25_1_H0.75"], rel=1e-14)
        assert covariance(0.25, 1.0, 0.75) == pytest.approx(0.23774, abs=5e-5)

    @given(s=times, t=times)
    def test_brownian_limit(self, s, t):
        assert covariance(s, t, 0.5) == pytest.approx(min(s, t), abs=1e-12 * (1 + max(s, t)))

    @given(s=times, t=times, h=hursts)
    def test_symmetric(self, s, t, h):
        assert covariance(s, t, h) == covariance(t, s, h)

    @given(t=times, h=hursts)
    def test_diagonal_exact(self, t, h):
        # the diagonal is t^2H itself, not 0.5 * (2 t^2H - 0): equal up to pow() rounding
        assert covariance(t, t, h) == pytest.approx(t ** (2 * h), rel=5e-16, abs=0.0)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            covariance(-0.1, 1.0, 0.75)

    def test_broadcasts(self):
        c = covariance(np.array([0.25, 0.5]), 1.0, 0.75)
        assert c.shape == (2,)


class TestKernel:
    def test_value(self):
        assert kernel_phi(1.0, 0.75) == pytest.approx(0.375)

    def test_even(self):
        assert kernel_phi(-2.0, 0.75) == kernel_phi(2.0, 0.75)

    @given(t=st.floats(min_value=1e-6, max_value=1e3), h=hursts)
    def test_positive(self, t, h):
        assert kernel_phi(t, h) > 0

    def test_singular_at_zero(self):
        with pytest.raises(SingularityError):
            kernel_phi(0.0, 0.75)

    @pytest.mark.parametrize("s,t,h", [(1, 1, 0.75), (0.25, 1.0, 0.75), (0.5, 0.5, 0.9)])
    def test_kernel_covariance_examples(self, s, t, h):
        assert covariance_via_kernel(s, t, h) == pytest.approx(covariance(s, t, h), rel=1e-6)

    def test_kernel_covariance_frozen(self, oracles):
        assert covariance_via_kernel(0.5, 0.5, 0.9) == pytest.approx(
            oracles["covariance_0.5_0.5_H0.9"], rel=1e-6)

    def test_kernel_covariance_needs_positive_times(self):
        with pytest.raises(DomainError):
            covariance_via_kernel(0.0, 1.0, 0.75)


class TestCovMatrix:
    @pytest.mark.parametrize("h", [0.55, 0.75, 0.95])
    @pytest.mark.parametrize("grid", [TimeGrid.uniform(0, 1, 64), TimeGrid.geometric(1e-4, 10, 80)])
    def test_symmetric_psd(self, grid, h):
        c = cov_matrix(grid, h)
        assert np.array_equal(c, c.T)
        assert is_psd(c)

    def test_not_psd_detected(self):
        assert not is_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestSampling:
    def test_origin_only(self):
        p = sample_fbm(TimeGrid.custom([0.0]), 0.75, 3)
        assert p.values.tolist() == [0.0]

    @pytest.mark.parametrize("method", ["cholesky", "circulant"])
    def test_deterministic_and_zero_at_origin(self, method):
        g = TimeGrid.uniform(0, 1, 64)
        a = sample_fbm(g, 0.75, 11, method)
        b = sample_fbm(g, 0.75, 11, method)
        assert np.array_equal(a.values, b.values)
        assert a.values[0] == 0.0
        assert a.meta == {"h": 0.75, "method": method}

    def test_seeds_differ(self):
        g = TimeGrid.uniform(0, 1, 16)
        assert not np.array_equal(sample_fbm(g, 0.75, 1).values, sample_fbm(g, 0.75, 2).values)

    def test_ensemble_row_is_single_path(self):
        g = TimeGrid.uniform(0, 1, 32)
        seeds = derive_seeds(5, 4)
        ens = sample_fbm_ensemble(g, 0.7, seeds, "circulant")
        assert np.array_equal(ens[2], sample_fbm(g, 0.7, seeds[2], "circulant").values)

    def test_circulant_needs_uniform(self):
        with pytest.raises(UsageError):
            sample_fbm(TimeGrid.geometric(0.01, 1, 10), 0.75, 1, "circulant")

    def test_circulant_fallback_is_recorded(self, monkeypatch):
        g = TimeGrid.uniform(0, 1, 16)
        monkeypatch.setattr(fbm, "CIRCULANT_CLIP", -1.0)  # every eigenvalue now "too negative"
        fbm._circulant_sqrt_eigs.cache_clear()
        recs = []
        try:
            with pytest.warns(CirculantFallbackWarning):
                out = sample_fbm_ensemble(g, 0.75, [1], "circulant", warnings_out=recs)
        finally:
            fbm._circulant_sqrt_eigs.cache_clear()
        assert recs and np.array_equal(out, sample_fbm_ensemble(g, 0.75, [1], "cholesky"))

    def test_covariance_at_quarter(self):
        g = TimeGrid.uniform(0, 1, 64)
        e = Ensemble.generate(g, 0.75, 20000, 99, "circulant")
        c = estimate_covariance(e, 0.25, 1.0)
        assert abs(c["estimate"] - covariance(0.25, 1.0, 0.75)) <= 4 * c["stderr"]


class TestLawProperties:
    N = 20000

    def test_self_similarity(self):
        """{B_ct} and {c^H B_t}: equal sample covariance matrices, c = 4, n = 32."""
        h, c = 0.75, 4.0
        g = TimeGrid.uniform(0, 1, 32)
        a = Ensemble.generate(TimeGrid.uniform(0, c, 32), h, self.N, 1, "circulant").values
        b = c**h * Ensemble.generate(g, h, self.N, 2, "circulant").values
        idx = [8, 16, 24, 32]
        for i in idx:
            for j in idx:
                ca, cb = np.mean(a[:, i] * a[:, j]), np.mean(b[:, i] * b[:, j])
                se = math.sqrt((np.var(a[:, i] * a[:, j]) + np.var(b[:, i] * b[:, j])) / self.N)
                assert abs(ca - cb) <= 4 * se

    @pytest.mark.parametrize("step", [1, 8])
    def test_stationary_increments(self, step):
        h = 0.75
        g = TimeGrid.uniform(0, 1, 64)
        x = Ensemble.generate(g, h, self.N, 3, "circulant").values
        inc = x[:, 20 + step] - x[:, 20]
        target = (step / 64) ** (2 * h)
        v = np.mean(inc**2)
        assert abs(v - target) <= 4 * target * math.sqrt(2.0 / (self.N - 1))

    def test_methods_indistinguishable(self):
        h = 0.75
        g = TimeGrid.uniform(0, 1, 64)
        a = Ensemble.generate(g, h, self.N, 4, "cholesky").values
        b = Ensemble.generate(g, h, self.N, 5, "circulant").values
        for i, j in [(16, 64), (32, 64), (64, 64), (8, 40), (48, 50)]:
            pa, pb = a[:, i] * a[:, j], b[:, i] * b[:, j]
            z = (pa.mean() - pb.mean()) / math.sqrt(pa.var() / self.N + pb.var() / self.N)
            assert abs(z) <= 4

    @pytest.mark.parametrize("h", [0.6, 0.9])
    def test_law_geometric_grid_cholesky(self, h):
        g = TimeGrid.geometric(1 / 64, 1, 30)
        e = Ensemble.generate(g, h, self.N, 6, "cholesky")
        reps = check_fbm_law(e, h, [(1 / 64, 1.0), (g.points[15], 1.0)])
        assert all(r.passed for r in reps), [r.to_dict() for r in reps if not r.passed]
