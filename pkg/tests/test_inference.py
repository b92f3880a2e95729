import math

import numpy as np
import pytest
from scipy import stats

from cmpreg.glm import fit_poisson_irls
from cmpreg.inference import (aic_bic, chi2_sf, lrt, normal_quantile, predict_mu,
                              quasi_f_test)
from cmpreg.regression import RegressionSpec, fit


class TestCriteria:
    def test_table_value(self):
        aic, bic = aic_bic(-255.803, 11, 125)
        assert aic == pytest.approx(533.606, abs=1e-9)
        # from the rounded loglik BIC is 564.71745; the loglik's own rounding
        # (+/-5e-4, doubled) plus display rounding allows 1.5e-3
        assert bic == pytest.approx(564.718, abs=1.5e-3)
        assert aic_bic(-208.250, 12, 125)[1] == pytest.approx(474.440, abs=1.5e-3)

    def test_cmp_mu_column(self):
        assert aic_bic(-208.398, 12, 125)[0] == pytest.approx(440.795, abs=1e-3)

    def test_trivial(self):
        assert aic_bic(0.0, 1, 1) == (2.0, 0.0)

    def test_affine_in_loglik(self):
        a1, b1 = aic_bic(-10.0, 3, 50)
        a2, b2 = aic_bic(-12.5, 3, 50)
        assert a2 - a1 == 5.0 and b2 - b1 == 5.0

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            aic_bic(-1.0, 0, 10)


class TestLrt:
    def test_table_pvalue(self):
        r = lrt(0.0, 67.319 / 2, 1)
        assert r.stat == pytest.approx(67.319)
        assert r.p_value == pytest.approx(2.31e-16, rel=0.02)

    def test_second_table_pvalue(self):
        assert lrt(0.0, 5.835 / 2, 1).p_value == pytest.approx(1.57e-2, rel=0.01)

    def test_zero_stat(self):
        r = lrt(-100.0, -100.0, 2)
        assert r.stat == 0 and r.p_value == 1.0

    def test_agrees_with_scipy_and_decreases(self):
        stats_ = [0.5, 1.0, 4.0, 12.0, 40.0]
        ps = [chi2_sf(s, 3) for s in stats_]
        np.testing.assert_allclose(ps, stats.chi2.sf(stats_, 3), rtol=1e-12)
        assert all(a > b for a, b in zip(ps, ps[1:]))

    def test_noise_warns_and_clamps(self):
        with pytest.warns(RuntimeWarning):
            r = lrt(-10.0, -10.1, 1)
        assert r.stat == 0
        r = lrt(-10.0, -10.0 - 1e-8, 1)
        assert r.stat == 0

    def test_df_must_be_positive(self):
        with pytest.raises(ValueError):
            lrt(-1.0, 0.0, 0)

    def test_nested_synthetic_nonnegative(self, overdispersed_300):
        y, X = overdispersed_300
        small = fit(RegressionSpec(y, X[:, :2]))
        big = fit(RegressionSpec(y, X))
        assert 2 * (big.loglik - small.loglik) >= -1e-6


class TestQuasiF:
    def test_table_value(self):
        r = quasi_f_test(123.929, 56.610, 3, 4, 1.106, 50)
        assert r.stat == pytest.approx(60.840, rel=0.005)
        assert r.df == 1 and 0 <= r.p_value < 1e-8

    def test_equal_deviance(self):
        r = quasi_f_test(50.0, 50.0, 2, 3, 1.3, 40)
        assert r.stat == 0 and r.p_value == 1.0

    def test_inverse_in_sigma(self):
        a = quasi_f_test(80.0, 60.0, 2, 4, 1.0, 40).stat
        b = quasi_f_test(80.0, 60.0, 2, 4, 2.5, 40).stat
        assert a == pytest.approx(2.5 * b, rel=1e-15)

    def test_pvalue_uses_f_distribution(self):
        r = quasi_f_test(80.0, 60.0, 2, 4, 1.5, 40)
        assert r.p_value == pytest.approx(stats.f.sf(r.stat, 2, 36), rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            quasi_f_test(1.0, 0.5, 3, 3, 1.0, 10)
        with pytest.raises(ValueError):
            quasi_f_test(1.0, 0.5, 2, 3, 0.0, 10)


class TestPrediction:
    def test_normal_quantile(self):
        assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)

    def test_intercept_only(self):
        y = np.array([3, 5, 4, 6, 2, 4, 5, 3], float)
        f = fit_poisson_irls(y, np.ones((8, 1)))
        pr = predict_mu(f, [1.0])
        se = f.se[0]
        assert pr.mu_hat == pytest.approx(math.exp(f.beta[0]))
        assert pr.ci_low == pytest.approx(math.exp(f.beta[0] - 1.959964 * se), rel=1e-6)
        assert pr.ci_high == pytest.approx(math.exp(f.beta[0] + 1.959964 * se), rel=1e-6)

    def test_level_zero_collapses(self, overdispersed_300):
        y, X = overdispersed_300
        f = fit_poisson_irls(y, X)
        pr = predict_mu(f, X[7], level=0.0)
        assert pr.ci_low == pr.mu_hat == pr.ci_high

    def test_poisson_and_cmp_agree_on_equidispersed(self, equidispersed_500):
        y, X = equidispersed_500
        pois = fit_poisson_irls(y, X)
        cmp_ = fit(RegressionSpec(y, X))
        for row in X[[0, 100, 250, 499]]:
            a, b = predict_mu(pois, row), predict_mu(cmp_, row)
            assert b.mu_hat == pytest.approx(a.mu_hat, rel=1e-3)
            assert 0 < b.ci_low <= b.mu_hat <= b.ci_high
            assert b.ci_low < a.ci_high and a.ci_low < b.ci_high

    def test_requires_vcov(self):
        class NoCov:
            beta = np.zeros(1)
            vcov = None

        with pytest.raises(ValueError):
            predict_mu(NoCov(), [1.0])
