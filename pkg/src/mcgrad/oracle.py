"""Deterministic ground truth for gradient estimators.

Quadrature splits the integration domain at every jump of ``phi`` and at
every density edge; each piece is integrated with composite Simpson using
one-sided endpoint values, so step functions and uniform densities are
handled without smearing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.stats import chi2

from . import rng
from .dists import DiagonalGaussian, Distribution, TruncatedDiscrete
from .errors import CrossCheckError, UnsupportedCapability
from .estimators import EstimatorSpec, TestFunction, batch_estimate

DEFAULT_POINTS = 16385
FD_STEP = 1e-5
FD_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n_points: int = DEFAULT_POINTS

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid needs lo < hi")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValueError("n_points must be odd and at least 3")


def default_grid(dist: Distribution, n_points: int = DEFAULT_POINTS) -> GridSpec:
    lo, hi = dist.default_grid_bounds()
    if dist.density_edges():
        # room for the support to move under finite-difference perturbations
        pad = 0.25 * (hi - lo)
        lo, hi = lo - pad, hi + pad
    return GridSpec(lo, hi, n_points)


def _pieces(dist: Distribution, phi: TestFunction, grid: GridSpec):
    cuts = {grid.lo, grid.hi}
    cuts.update(float(c) for c, _ in phi.discontinuities)
    cuts.update(float(c) for c, _, _ in dist.density_edges())
    pts = sorted(c for c in cuts if grid.lo <= c <= grid.hi)
    return list(zip(pts[:-1], pts[1:]))


def _piecewise_simpson(f, pieces, n_points):
    """Integrate ``f`` (returning shape ``(n, ...)``) piece by piece."""
    total = 0.0
    for a, b in pieces:
        x = np.linspace(a, b, n_points)
        # one-sided limits at the piece ends
        x[0] = np.nextafter(a, b)
        x[-1] = np.nextafter(b, a)
        y = np.asarray(f(x), dtype=float)
        total = total + simpson(y, x=np.linspace(a, b, n_points), axis=0)
    return total


def _check_coverage(dist, grid):
    if dist.density_edges():
        return
    edge = max(float(dist.pdf(np.asarray(grid.lo))), float(dist.pdf(np.asarray(grid.hi))))
    if edge > 1e-10:
        warnings.warn(f"quadrature grid [{grid.lo}, {grid.hi}] truncates mass: boundary density {edge:.3g}", RuntimeWarning, stacklevel=3)


def quadrature_expectation(dist: Distribution, phi: TestFunction, grid: GridSpec | None = None) -> float:
    """E_p[phi] by piecewise composite Simpson (1-D, or separable phi on a diagonal Gaussian)."""
    if isinstance(dist, DiagonalGaussian):
        f = _separable(phi)
        return float(sum(quadrature_expectation(dist.marginal(j), f) for j in range(dist.event_dim)))
    if isinstance(dist, TruncatedDiscrete):
        y = dist.support
        return float(np.sum(dist.pmf(y) * phi.value(y)))
    grid = grid or default_grid(dist)
    _check_coverage(dist, grid)
    return float(_piecewise_simpson(lambda x: dist.pdf(x) * phi.value(x), _pieces(dist, phi, grid), grid.n_points))


def _separable(phi):
    if phi.separable is None:
        raise UnsupportedCapability("multivariate quadrature needs a separable test function")
    return phi.separable


def _boundary_terms(dist: Distribution, phi: TestFunction) -> np.ndarray:
    # Leibniz rule for moving density edges: -jump * velocity * phi(edge)
    total = np.zeros(dist.n_params)
    for loc, jump, velocity in dist.density_edges():
        total -= jump * velocity * float(phi.value(np.asarray(loc)))
    return total


def _fd_gradient(expectation, dist: Distribution, step: float = FD_STEP) -> np.ndarray:
    theta = dist.params.values
    out = np.empty(theta.size)
    for i in range(theta.size):
        h = step * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        out[i] = (expectation(dist.with_values(up)) - expectation(dist.with_values(down))) / (up[i] - down[i])
    return out


def quadrature_gradient(
    dist: Distribution, phi: TestFunction, grid: GridSpec | None = None, *, cross_check: bool = True
) -> np.ndarray:
    """Integral of ``dp/dtheta * phi`` plus moving-edge terms, one entry per parameter.

    Cross-checked against central finite differences of
    :func:`quadrature_expectation`; disagreement above ``FD_TOL`` raises
    :class:`CrossCheckError`.
    """
    if isinstance(dist, TruncatedDiscrete):
        return discrete_bruteforce_gradient(dist, phi, cross_check=cross_check)
    if isinstance(dist, DiagonalGaussian):
        f = _separable(phi)
        d = dist.event_dim
        out = np.empty(2 * d)
        for j in range(d):
            g = quadrature_gradient(dist.marginal(j), f, cross_check=cross_check)
            out[j], out[d + j] = g
        return out
    grid = grid or default_grid(dist)
    _check_coverage(dist, grid)
    pieces = _pieces(dist, phi, grid)
    grad = _piecewise_simpson(lambda x: dist.dpdf_dtheta(x) * np.asarray(phi.value(x))[:, None], pieces, grid.n_points)
    grad = np.asarray(grad) + _boundary_terms(dist, phi)
    if cross_check:
        fd = _fd_gradient(lambda dd: quadrature_expectation(dd, phi, grid), dist)
        if not np.all(np.abs(fd - grad) <= FD_TOL):
            raise CrossCheckError(f"quadrature gradient {grad} disagrees with finite differences {fd}")
    return grad


def boxes_lr_gradient(
    dist: Distribution, phi: TestFunction, n_boxes: int, dtheta: float = 1e-6, grid: GridSpec | None = None
) -> np.ndarray:
    """Fixed boxes: sum of ``dx * (p(x; theta + d) - p(x; theta)) / d * phi(x)``."""
    if n_boxes < 10:
        raise ValueError("n_boxes must be at least 10")
    if dtheta <= 0:
        raise ValueError("dtheta must be positive")
    lo, hi = (grid.lo, grid.hi) if grid else dist.default_grid_bounds()
    width = (hi - lo) / n_boxes
    x = lo + width * (np.arange(n_boxes) + 0.5)
    f = np.asarray(phi.value(x), dtype=float)
    p0 = np.asarray(dist.pdf(x))
    theta = dist.params.values
    out = np.empty(theta.size)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += dtheta
        dp = (np.asarray(dist.with_values(up).pdf(x)) - p0) / dtheta
        out[i] = np.sum(width * dp * f)
    return out


def boxes_rp_gradient(dist: Distribution, phi: TestFunction, n_boxes: int, dtheta: float = 1e-6) -> np.ndarray:
    """Fixed-mass boxes on a uniform eps grid: ``sum P_i (phi(g(eps_i; theta + d)) - phi(g(eps_i; theta))) / d``."""
    if dist.event_dim or not dist.reparameterizable:
        raise UnsupportedCapability("probability-mass boxes need a reparameterizable 1-D distribution")
    if n_boxes < 10:
        raise ValueError("n_boxes must be at least 10")
    lo, hi = dist.standard_range()
    d_eps = (hi - lo) / n_boxes
    eps = lo + d_eps * (np.arange(n_boxes) + 0.5)
    mass = dist.standard_pdf(eps) * d_eps
    f0 = np.asarray(phi.value(dist.reparam_g(eps)), dtype=float)
    theta = dist.params.values
    out = np.empty(theta.size)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += dtheta
        f1 = np.asarray(phi.value(dist.with_values(up).reparam_g(eps)), dtype=float)
        out[i] = np.sum(mass * (f1 - f0) / dtheta)
    return out


def discrete_bruteforce_gradient(dist: TruncatedDiscrete, phi, *, cross_check: bool = False, tol: float = 1e-8) -> np.ndarray:
    """Exact ``sum_y dp(y)/dtheta * phi(y)`` over the truncated support."""
    f = getattr(phi, "value", phi)
    y = dist.support
    fy = np.asarray(f(y), dtype=float)
    grad = (dist.dpmf_dtheta(y) * fy[:, None]).sum(axis=0)
    if cross_check:
        fd = _fd_gradient(lambda dd: float(np.sum(dd.pmf(y) * fy)), dist)
        if not np.all(np.abs(fd - grad) <= tol * np.maximum(1.0, np.abs(grad))):
            raise CrossCheckError(f"brute-force gradient {grad} disagrees with finite differences {fd}")
    return grad


def oracle_gradient(dist: Distribution, phi: TestFunction) -> np.ndarray:
    """The reference gradient used by reports and acceptance checks."""
    return quadrature_gradient(dist, phi)


@dataclass(frozen=True)
class VarianceReport:
    mean: np.ndarray
    variance: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    batch_means: np.ndarray
    n: int
    reps: int
    seed: int
    level: float = 0.99

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / (self.n * self.reps))


def variance_report(
    spec: EstimatorSpec,
    dist: Distribution,
    phi: TestFunction,
    n: int,
    reps: int,
    seed: int,
    *,
    level: float = 0.99,
    threads: int | None = None,
) -> VarianceReport:
    """Per-sample variance of an estimator from ``reps`` independent batches.

    The point estimate is ``n`` times the sample variance of the batch means;
    batch means are close to normal, so a chi-square interval with
    ``reps - 1`` degrees of freedom applies. Replicate ``r`` uses the seed
    ``derive_seed(seed, r)``.
    """
    if reps < 30:
        raise ValueError("variance reports need at least 30 replicates")
    means = np.stack(
        [batch_estimate(spec, dist, phi, n, rng.derive_seed(seed, 1000 + r), threads=threads).mean for r in range(reps)]
    )
    s2 = means.var(axis=0, ddof=1)
    dof = reps - 1
    alpha = 1.0 - level
    var = n * s2
    lo = dof * var / chi2.ppf(1.0 - alpha / 2.0, dof)
    hi = dof * var / chi2.ppf(alpha / 2.0, dof)
    return VarianceReport(means.mean(axis=0), var, lo, hi, means, n, reps, seed, level)
