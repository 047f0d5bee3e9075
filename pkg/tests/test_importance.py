import logging

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from mcgrad.bench.registry import linear, quadratic
from mcgrad.dists import Gaussian1D
from mcgrad.errors import ZeroDensityError
from mcgrad.estimators import EstimatorSpec, batch_estimate
from mcgrad.importance import (
    WEIGHT_CLIP,
    LDistribution,
    clip_weights,
    importance_weight,
    l_pdf,
    l_sample,
    slice_lr_contribution,
)


class TestLDistribution:
    def test_pdf_normalized(self):
        L = LDistribution(0.5, 1.3)
        total, _ = quad(L.pdf, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_pdf_vanishes_at_mu(self):
        assert l_pdf(LDistribution(0.2, 1.0), 0.2) == 0.0

    def test_pdf_relation_to_base(self):
        L = LDistribution(0.0, 2.0)
        x = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(L.pdf(x), x**2 / 4.0 * L.base_pdf(x), rtol=1e-14)

    def test_samples_follow_pdf(self):
        L = LDistribution(0.0, 1.0)
        x = L.sample_batch(2, 0, 50_000).x
        # |x| is chi with three degrees of freedom
        assert stats.kstest(np.abs(x), stats.chi(3).cdf).pvalue > 1e-3

    def test_sample_matches_batch(self):
        L = LDistribution(0.5, 1.3)
        b = L.sample_batch(4, 0, 10)
        d = l_sample(L, 4, 7)
        assert d.x == b.x[7] and d.eps_x == b.eps_x[7] and d.sign == b.sign[7]

    def test_radius_formula(self):
        L = LDistribution(0.5, 1.3)
        b = L.sample_batch(1, 0, 100)
        r = 1.3 * np.sqrt(-2 * np.log(b.eps_h) + b.eps_x**2)
        np.testing.assert_allclose(b.x, 0.5 + b.sign * r, rtol=1e-15)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            LDistribution(0.0, -1.0)


class TestSliceEstimator:
    def test_exact_for_centered_linear(self):
        L = LDistribution(0.5, 1.3)
        c = slice_lr_contribution(L, linear(0.5), L.sample_batch(0, 0, 10_000))
        assert np.all(c == 1.0)

    def test_unbiased_quadratic(self):
        g = Gaussian1D(0.5, 1.3)
        est = batch_estimate(EstimatorSpec("slice"), g, quadratic(), 200_000, 1)
        assert abs(est.mean[0] - 1.0) < 4 * est.std_error[0]
        assert np.isnan(est.mean[1])


class TestWeights:
    def test_clip(self, caplog):
        with caplog.at_level(logging.WARNING):
            w, n = clip_weights(np.array([1.0, 1e15]))
        assert n == 1 and w[1] == WEIGHT_CLIP
        assert "clipped" in caplog.text

    def test_weight_ratio(self):
        p, q = Gaussian1D(0.0, 1.0), Gaussian1D(0.0, 2.0)
        x = np.array([0.0, 1.0])
        np.testing.assert_allclose(importance_weight(p, q, x), p.pdf(x) / q.pdf(x))

    def test_zero_q(self):
        from mcgrad.dists import Uniform1D

        with pytest.raises(ZeroDensityError):
            importance_weight(Gaussian1D(0, 1), Uniform1D(0, 1), np.array([3.0]))
