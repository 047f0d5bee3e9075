import numpy as np
import pytest

from mcgrad.bench.registry import cubic, linear, quadratic, sine, step, sumsq
from mcgrad.dists import DiagonalGaussian, Gaussian1D, TruncatedDiscrete, Uniform1D
from mcgrad.errors import UnsupportedCapability
from mcgrad.estimators import EstimatorSpec, moving_boundary_gradient
from mcgrad.oracle import (
    GridSpec,
    boxes_lr_gradient,
    boxes_rp_gradient,
    discrete_bruteforce_gradient,
    quadrature_expectation,
    quadrature_gradient,
    variance_report,
)

G = Gaussian1D(0.5, 1.3)


class TestQuadrature:
    def test_quadratic_gradient(self):
        np.testing.assert_allclose(quadrature_gradient(G, quadratic()), [1.0, 2.6], atol=1e-10)

    def test_sin_gradient(self):
        # E[sin x] = sin(mu) exp(-sigma^2 / 2)
        damp = np.exp(-0.5 * 1.3**2)
        np.testing.assert_allclose(
            quadrature_gradient(G, sine()), [np.cos(0.5) * damp, -1.3 * np.sin(0.5) * damp], atol=1e-10
        )

    def test_step_split_domain(self):
        g = Gaussian1D(0.3, 1.0)
        # E[step(0)] = Phi(mu / sigma)
        np.testing.assert_allclose(
            quadrature_gradient(g, step(0.0)), g.pdf(0.0) * np.array([1.0, -0.3]), atol=1e-10
        )

    def test_uniform_with_edges(self):
        u = Uniform1D(1.0, 0.5)
        # E[x^3] = mu^3 + mu delta^2
        np.testing.assert_allclose(quadrature_gradient(u, cubic()), [3.25, 1.0], atol=1e-10)
        assert quadrature_expectation(u, cubic()) == pytest.approx(1.25, abs=1e-12)

    def test_diagonal_separable(self):
        d = DiagonalGaussian.isotropic(4, 0.5, 1.3)
        np.testing.assert_allclose(quadrature_gradient(d, sumsq(4)), [1.0] * 4 + [2.6] * 4, atol=1e-10)

    def test_diagonal_needs_separable(self):
        from mcgrad.estimators import TestFunction

        phi = TestFunction("prod", lambda x: np.prod(x, -1), lambda x: x, vector=True)
        with pytest.raises(UnsupportedCapability):
            quadrature_gradient(DiagonalGaussian.isotropic(2, 0, 1), phi)

    def test_truncation_warning(self):
        with pytest.warns(RuntimeWarning):
            quadrature_expectation(G, quadratic(), GridSpec(-1.0, 1.0, 101))

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            GridSpec(0.0, 1.0, 100)
        with pytest.raises(ValueError):
            GridSpec(1.0, 0.0)


class TestDiscrete:
    def test_poisson(self):
        d = TruncatedDiscrete.poisson(3.0, 30)
        g = discrete_bruteforce_gradient(d, quadratic(), cross_check=True)
        assert g[0] == pytest.approx(7.0, abs=1e-10)


class TestBoxes:
    @pytest.mark.parametrize("phi", [linear(), quadratic(), cubic(), sine()], ids=lambda p: p.name)
    def test_converge(self, phi):
        truth = quadrature_gradient(G, phi)
        np.testing.assert_allclose(boxes_lr_gradient(G, phi, 10_000), truth, atol=1e-3)
        np.testing.assert_allclose(boxes_rp_gradient(G, phi, 10_000), truth, atol=1e-3)

    def test_min_boxes(self):
        with pytest.raises(ValueError):
            boxes_lr_gradient(G, quadratic(), 5)

    def test_rp_boxes_need_reparam(self):
        with pytest.raises(UnsupportedCapability):
            boxes_rp_gradient(TruncatedDiscrete.two_point(0.3), quadratic(), 100)


class TestMovingBoundary:
    @pytest.mark.parametrize("k,expected", [(1, 1.0), (2, 2.0), (3, 3.25)])
    def test_powers(self, k, expected):
        from mcgrad.estimators import TestFunction

        phi = TestFunction(f"x^{k}", lambda x: np.asarray(x) ** k, lambda x: k * np.asarray(x) ** (k - 1))
        assert abs(moving_boundary_gradient(Uniform1D(1.0, 0.5), phi)[0] - expected) <= 1e-12


class TestVarianceReport:
    def test_report_contains_truth(self):
        rep = variance_report(EstimatorSpec("rp"), G, quadratic(), 2000, 40, 0)
        # per-sample RP variance for x^2: Var(2x) = 4 sigma^2
        assert rep.ci_low[0] < 4 * 1.3**2 < rep.ci_high[0]
        assert rep.batch_means.shape == (40, 2)

    def test_needs_replicates(self):
        with pytest.raises(ValueError):
            variance_report(EstimatorSpec("rp"), G, quadratic(), 100, 5, 0)
