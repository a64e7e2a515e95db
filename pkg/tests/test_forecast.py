import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsim.error_model import KernelErrorDensity
from fsim.fda import CurveSet
from fsim.forecast import (
    PredictionInterval,
    empirical_coverage,
    error_cdf,
    error_cdf_quantile,
    point_forecast,
    point_forecasts,
    prediction_interval,
    prediction_intervals,
)
from fsim.mcmc import McmcConfig
from fsim.model import FsimModel, fit_fsim, fit_nfr
from fsim.regression import ExtrapolationWarning, NwModel, estimate_index, nw_predict
from fsim.simulation import gen_curves, gen_response

STD = KernelErrorDensity([0.0], 1.0)


@pytest.fixture(scope="module")
def fitted(smooth_data):
    curves, y, _ = smooth_data
    return fit_fsim(curves, y, mcmc=McmcConfig(burn_in=300, keep=1500, seed=5))


class TestQuantiles:
    def test_standard_normal(self):
        step = 10.0 / 1000
        assert error_cdf_quantile(STD, 0.975) == pytest.approx(1.96, abs=step + 1e-3)
        assert error_cdf_quantile(STD, 0.025) == pytest.approx(-1.96, abs=step + 1e-3)

    def test_fixed_range_grid(self):
        grid, cdf = error_cdf(STD, fixed_range=True)
        assert grid[0] == -5 and grid[-1] == 5 and grid.size == 1001
        assert cdf[0] == 0 and cdf[-1] == pytest.approx(1.0, abs=1e-5)

    def test_symmetric_median(self, rng):
        half = rng.normal(size=12)
        d = KernelErrorDensity(np.r_[2 + half, 2 - half], 0.3)
        step = 10 * d.spread / 1000
        assert abs(error_cdf_quantile(d, 0.5) - 2.0) <= step + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_monotone(self, q1, q2):
        d = KernelErrorDensity([-1.0, 0.0, 2.5], 0.4)
        lo, hi = sorted((q1, q2))
        assert error_cdf_quantile(d, lo) <= error_cdf_quantile(d, hi)

    def test_round_trip_on_grid(self):
        d = KernelErrorDensity([-1.0, 0.5, 0.7], 0.5)
        grid, cdf = error_cdf(d)
        step = grid[1] - grid[0]
        for j in range(100, 900, 97):
            assert abs(error_cdf_quantile(d, cdf[j]) - grid[j]) <= step + 1e-12

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5])
    def test_rejects_bad_q(self, q):
        with pytest.raises(ValueError):
            error_cdf_quantile(STD, q)


class TestIntervals:
    def test_shift(self):
        d = KernelErrorDensity([-0.3, 0.1, 0.9], 0.25)
        a, b = prediction_interval(1.0, d), prediction_interval(1.0 + 3.7, d)
        assert b.lo - a.lo == pytest.approx(3.7, abs=1e-12)
        assert b.hi - a.hi == pytest.approx(3.7, abs=1e-12)

    def test_symmetric_density(self):
        d = KernelErrorDensity([-1.0, 0.0, 1.0], 0.5)
        iv = prediction_interval(10.0, d)
        step = 10 * d.spread / 1000
        assert abs((iv.hi - 10.0) - (10.0 - iv.lo)) <= step + 1e-9

    def test_normal_residual_width(self, rng):
        eta = rng.normal(size=500)
        b = 1.06 * eta.std() * 500 ** -0.2
        iv = prediction_interval(0.0, KernelErrorDensity(eta, b))
        assert 1.7 < iv.width / 2 < 2.3

    def test_width_grows_with_level(self, rng):
        d = KernelErrorDensity(rng.standard_t(4, size=60), 0.3)
        for lo, hi in ((0.5, 0.8), (0.8, 0.9), (0.9, 0.95), (0.95, 0.99)):
            assert prediction_interval(0, d, lo).width <= prediction_interval(0, d, hi).width

    @pytest.mark.parametrize("level", [0.0, 1.0, 1.2])
    def test_rejects_bad_level(self, level):
        with pytest.raises(ValueError):
            prediction_interval(0.0, STD, level)

    def test_interval_type_checks(self):
        with pytest.raises(ValueError):
            PredictionInterval(0.0, 1.0, -1.0, 0.9)
        with pytest.raises(ValueError):
            PredictionInterval(0.0, -1.0, 1.0, 1.0)

    def test_batch_matches_single(self):
        d = KernelErrorDensity([0.0, 1.0], 0.5)
        batch = prediction_intervals([0.0, 2.0], d)
        assert batch[1] == prediction_interval(2.0, d)


class TestCoverage:
    def test_all_inside(self):
        ivs = [PredictionInterval(0, -1, 1, 0.95)] * 3
        assert empirical_coverage(ivs, [0.0, 0.5, -1.0]) == 1.0

    def test_none_inside(self):
        ivs = [PredictionInterval(0, -1, 1, 0.95)] * 2
        assert empirical_coverage(ivs, [3.0, -2.0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            empirical_coverage([PredictionInterval(0, -1, 1, 0.95)], [0.0, 1.0])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
    def test_in_unit_interval(self, ys):
        ivs = [PredictionInterval(0, -1, 1, 0.9)] * len(ys)
        assert 0.0 <= empirical_coverage(ivs, ys) <= 1.0


class TestPointForecast:
    def test_training_curve_gives_full_sample_fit(self, fitted, smooth_data):
        curves, y, _ = smooth_data
        model = fitted.nw
        full = nw_predict(model, fitted.fit.index)[0]
        for i in (0, 17, 42):
            assert point_forecast(fitted.fit, model, curves.values[i]) == pytest.approx(full[i], abs=1e-12)

    def test_constant_response(self, smooth_data):
        curves, y, _ = smooth_data
        fit = estimate_index(curves, y)
        model = NwModel(fit.index, np.full(curves.n, 4.0), 0.1)
        vals, _ = point_forecasts(fit, model, curves)
        np.testing.assert_allclose(vals, 4.0, rtol=1e-14)

    def test_grid_mismatch(self, fitted):
        other = CurveSet(np.linspace(0, 1, 50), np.zeros((2, 50)))
        with pytest.raises(ValueError):
            point_forecasts(fitted.fit, fitted.nw, other)

    def test_far_curve_warns(self, fitted, smooth_data):
        curves, _, _ = smooth_data
        with pytest.warns(ExtrapolationWarning):
            point_forecast(fitted.fit, fitted.nw, 1e4 * curves.values[0])

    def test_noiseless_cubic_link(self):
        r = np.random.default_rng(17)
        curves = gen_curves(250, "smooth", r)
        y, m, _ = gen_response(curves, 0.0, "iid", r)
        train, test = curves.subset(range(200)), curves.subset(range(200, 250))
        model = fit_fsim(train, y[:200], mcmc=McmcConfig(burn_in=300, keep=1000, seed=1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtrapolationWarning)
            pred, _ = point_forecasts(model.fit, model.nw, test)
        assert np.median(np.abs(pred - m[200:])) < 0.1 * y.std()


class TestModel:
    def test_json_round_trip_is_bit_exact(self, fitted, smooth_data):
        curves, _, _ = smooth_data
        back = FsimModel.from_dict(json.loads(json.dumps(fitted.to_dict())))
        for name in ("y", "rho", "residuals"):
            np.testing.assert_array_equal(getattr(back, name), getattr(fitted, name))
        assert back.h == fitted.h and back.b == fitted.b
        np.testing.assert_array_equal(back.fit.beta_curve, fitted.fit.beta_curve)
        np.testing.assert_array_equal(back.fit.basis.eigenfunctions, fitted.fit.basis.eigenfunctions)
        np.testing.assert_array_equal(back.predict(curves)[0], fitted.predict(curves)[0])

    def test_rejects_foreign_file(self):
        with pytest.raises(ValueError):
            FsimModel.from_dict({"format": "other"})

    def test_training_coverage(self, fitted, smooth_data):
        curves, y, _ = smooth_data
        assert empirical_coverage(fitted.intervals(curves), y) >= 0.8

    def test_ar_order_by_aicc(self, smooth_data):
        curves, y, _ = smooth_data
        model = fit_fsim(curves, y, ar_order="aicc", mcmc=McmcConfig(burn_in=100, keep=200, seed=2))
        assert model.chain.p in (0, 1, 2, 3)
        assert model.rho.size == model.chain.p

    def test_nfr_cv_and_bayes(self, smooth_data):
        curves, y, _ = smooth_data
        x = curves.inner(np.sin(np.pi * curves.grid))
        dist = np.abs(x[:, None] - x[None, :])
        cv = fit_nfr(dist, y, bandwidth="cv")
        bayes = fit_nfr(dist, y, mcmc=McmcConfig(burn_in=200, keep=1000, seed=3))
        assert cv.chain is None and bayes.chain is not None
        for m in (cv, bayes):
            assert np.mean((m.fitted(dist) - y) ** 2) < np.var(y)
        with pytest.raises(ValueError):
            fit_nfr(dist, y, bandwidth="plugin")
