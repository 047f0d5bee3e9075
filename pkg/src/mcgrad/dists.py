"""Parameterized distributions exposing every derivative the estimators need.

Shape conventions (used throughout the package):

* 1-D distributions take points of any batch shape ``B``; spatial outputs
  (``dpdf_dx``) have shape ``B``.
* ``DiagonalGaussian`` takes points of shape ``B + (d,)``; spatial outputs
  have shape ``B + (d,)``.
* Parameter-indexed outputs always append a trailing axis of length
  ``len(dist.params)``, ordered as ``dist.params``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import poisson

from . import rng
from .errors import DomainError, UnsupportedCapability

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ParamVector:
    """Ordered, uniquely named parameter values."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")

    @classmethod
    def of(cls, names: Sequence[str], values: Sequence[float]) -> "ParamVector":
        if len(names) != len(values):
            raise ValueError("names and values differ in length")
        return cls(tuple((str(n), float(v)) for n, v in zip(names, values)))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, name: str) -> float:
        return self.entries[self.index(name)][1]


class Distribution:
    """Capability record for p(x; theta).

    Subclasses override what they support; everything else raises
    :class:`UnsupportedCapability`.  Instances are immutable.
    """

    event_dim: int = 0  # 0 for scalar points, d for vector points
    params: ParamVector
    discrete = False

    def _unsupported(self, what):
        raise UnsupportedCapability(f"{type(self).__name__} does not support {what}")

    @property
    def dim_x(self) -> int:
        return max(self.event_dim, 1)

    @property
    def n_params(self) -> int:
        return len(self.params)

    def with_values(self, values) -> "Distribution":
        self._unsupported("re-parameterization by value")

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def log_pdf(self, x):
        self._unsupported("log_pdf")

    def dlogpdf_dtheta(self, x):
        self._unsupported("dlogpdf_dtheta")

    def dpdf_dtheta(self, x):
        return self.pdf(x)[..., None] * self.dlogpdf_dtheta(x)

    def dpdf_dx(self, x):
        self._unsupported("dpdf_dx")

    def cdf(self, x):
        self._unsupported("cdf")

    def dcdf_dtheta(self, x):
        self._unsupported("dcdf_dtheta")

    # reparameterization x = g(eps; theta) and its inverse S
    def reparam_g(self, eps):
        self._unsupported("reparameterization")

    def dg_dtheta(self, eps):
        self._unsupported("reparameterization")

    def standardize_S(self, x):
        self._unsupported("standardization")

    def standard_from_uniform(self, u):
        self._unsupported("standard draws")

    def standard_pdf(self, eps):
        self._unsupported("standard density")

    def standard_range(self) -> tuple[float, float]:
        self._unsupported("standard range")

    def reparam_div_velocity(self, x):
        """Divergence of the reparameterization velocity, one entry per parameter."""
        self._unsupported("reparameterization flow divergence")

    # moving density edges: list of (location, jump p(c+) - p(c-), d location / d theta)
    def density_edges(self) -> list[tuple[float, float, np.ndarray]]:
        return []

    def default_grid_bounds(self) -> tuple[float, float]:
        self._unsupported("quadrature bounds")

    # sampling
    def sample_batch(self, seed: int, start: int, count: int) -> np.ndarray:
        if self.event_dim:
            u = rng.uniform_block(seed, start, count, self.event_dim)
        else:
            u = rng.uniforms(seed, start, count)
        return self.reparam_g(self.standard_from_uniform(u))

    def sample(self, seed: int, index: int):
        return self.sample_batch(seed, index, 1)[0]

    def standard_batch(self, seed: int, start: int, count: int) -> np.ndarray:
        """The standard draws that :meth:`sample_batch` pushes through ``g``."""
        if self.event_dim:
            u = rng.uniform_block(seed, start, count, self.event_dim)
        else:
            u = rng.uniforms(seed, start, count)
        return self.standard_from_uniform(u)

    @property
    def reparameterizable(self) -> bool:
        return supports(self, "dg_dtheta") and supports(self, "standardize_S")


def supports(dist: Distribution, method: str) -> bool:
    """True when ``dist`` overrides the base-class stub for ``method``."""
    impl = getattr(type(dist), method, None)
    return impl is not None and impl is not getattr(Distribution, method, None)


class Gaussian1D(Distribution):
    """Normal distribution parameterized by location ``mu`` and scale ``sigma``."""

    def __init__(self, mu: float, sigma: float):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.params = ParamVector.of(("mu", "sigma"), (self.mu, self.sigma))

    def __repr__(self):
        return f"Gaussian1D(mu={self.mu!r}, sigma={self.sigma!r})"

    def with_values(self, values):
        return Gaussian1D(*values)

    def log_pdf(self, x):
        eps = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -_LOG_SQRT_2PI - np.log(self.sigma) - 0.5 * eps * eps

    def pdf(self, x):
        eps = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _INV_SQRT_2PI / self.sigma * np.exp(-0.5 * eps * eps)

    def dlogpdf_dtheta(self, x):
        eps = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.stack([eps / self.sigma, (eps * eps - 1.0) / self.sigma], axis=-1)

    def dpdf_dx(self, x):
        x = np.asarray(x, dtype=float)
        return -self.pdf(x) * (x - self.mu) / self.sigma**2

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def dcdf_dtheta(self, x):
        x = np.asarray(x, dtype=float)
        finite = np.isfinite(x)
        xf = np.where(finite, x, self.mu)
        p = self.pdf(xf)
        eps = (xf - self.mu) / self.sigma
        out = np.stack([-p, -p * eps], axis=-1)
        return np.where(finite[..., None], out, 0.0)

    def reparam_g(self, eps):
        return self.mu + self.sigma * np.asarray(eps, dtype=float)

    def dg_dtheta(self, eps):
        eps = np.asarray(eps, dtype=float)
        return np.stack([np.ones_like(eps), eps], axis=-1)

    def standardize_S(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    # elementwise S-derivatives, used by the implicit flow
    def dS_dx(self, x):
        return np.full(np.shape(x), 1.0 / self.sigma)

    def d2S_dx2(self, x):
        return np.zeros(np.shape(x))

    def dS_dtheta(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.full(x.shape, -1.0 / self.sigma), -(x - self.mu) / self.sigma**2], axis=-1)

    def d2S_dxdtheta(self, x):
        shape = np.shape(x)
        return np.stack([np.zeros(shape), np.full(shape, -1.0 / self.sigma**2)], axis=-1)

    def standard_from_uniform(self, u):
        return ndtri(u)

    def standard_pdf(self, eps):
        eps = np.asarray(eps, dtype=float)
        return _INV_SQRT_2PI * np.exp(-0.5 * eps * eps)

    def standard_range(self):
        return (-12.0, 12.0)

    def reparam_div_velocity(self, x):
        shape = np.shape(x)
        return np.stack([np.zeros(shape), np.full(shape, 1.0 / self.sigma)], axis=-1)

    def default_grid_bounds(self):
        return (self.mu - 12.0 * self.sigma, self.mu + 12.0 * self.sigma)


class DiagonalGaussian(Distribution):
    """Independent normals; parameters are ``mu_0..mu_{d-1}`` then ``sigma_0..sigma_{d-1}``."""

    def __init__(self, mu, sigma):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if mu.shape != sigma.shape or mu.ndim != 1:
            raise ValueError("mu and sigma must be 1-D and the same length")
        if not np.all(sigma > 0):
            raise ValueError("all sigma entries must be positive")
        self.mu = mu
        self.sigma = sigma
        self.event_dim = mu.size
        d = mu.size
        names = [f"mu_{i}" for i in range(d)] + [f"sigma_{i}" for i in range(d)]
        self.params = ParamVector.of(names, np.concatenate([mu, sigma]))

    def __repr__(self):
        return f"DiagonalGaussian(mu={self.mu.tolist()!r}, sigma={self.sigma.tolist()!r})"

    @classmethod
    def isotropic(cls, d: int, mu: float, sigma: float) -> "DiagonalGaussian":
        return cls(np.full(d, float(mu)), np.full(d, float(sigma)))

    def with_values(self, values):
        values = np.asarray(values, dtype=float)
        d = self.event_dim
        return DiagonalGaussian(values[:d], values[d:])

    def _eps(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def log_pdf(self, x):
        eps = self._eps(x)
        return np.sum(-_LOG_SQRT_2PI - np.log(self.sigma) - 0.5 * eps * eps, axis=-1)

    def dlogpdf_dtheta(self, x):
        eps = self._eps(x)
        return np.concatenate([eps / self.sigma, (eps * eps - 1.0) / self.sigma], axis=-1)

    def dpdf_dx(self, x):
        eps = self._eps(x)
        return -self.pdf(x)[..., None] * eps / self.sigma

    def reparam_g(self, eps):
        return self.mu + self.sigma * np.asarray(eps, dtype=float)

    def _diag_embed(self, per_dim_mu, per_dim_sigma):
        # (..., d) pairs -> (..., d, 2d) with entries on the two diagonals
        d = self.event_dim
        shape = per_dim_mu.shape
        out = np.zeros(shape + (2 * d,))
        idx = np.arange(d)
        out[..., idx, idx] = per_dim_mu
        out[..., idx, d + idx] = per_dim_sigma
        return out

    def dg_dtheta(self, eps):
        eps = np.asarray(eps, dtype=float)
        return self._diag_embed(np.ones_like(eps), eps)

    def standardize_S(self, x):
        return self._eps(x)

    def dS_dx(self, x):
        return np.broadcast_to(1.0 / self.sigma, np.shape(x)).copy()

    def d2S_dx2(self, x):
        return np.zeros(np.shape(x))

    def dS_dtheta(self, x):
        x = np.asarray(x, dtype=float)
        return self._diag_embed(np.broadcast_to(-1.0 / self.sigma, x.shape), -(x - self.mu) / self.sigma**2)

    def d2S_dxdtheta(self, x):
        shape = np.shape(x)
        return self._diag_embed(np.zeros(shape), np.broadcast_to(-1.0 / self.sigma**2, shape))

    def standard_from_uniform(self, u):
        return ndtri(u)

    def standard_pdf(self, eps):
        eps = np.asarray(eps, dtype=float)
        return np.prod(_INV_SQRT_2PI * np.exp(-0.5 * eps * eps), axis=-1)

    def reparam_div_velocity(self, x):
        batch = np.shape(x)[:-1]
        per = np.concatenate([np.zeros(self.event_dim), 1.0 / self.sigma])
        return np.broadcast_to(per, batch + per.shape).copy()

    def marginal(self, j: int) -> Gaussian1D:
        return Gaussian1D(self.mu[j], self.sigma[j])


class Uniform1D(Distribution):
    """Uniform on ``[mu - delta, mu + delta]``.

    Density derivatives are undefined on the two edges and raise there; the
    edge motion is exposed through :meth:`density_edges` instead.
    """

    def __init__(self, mu: float, delta: float):
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.mu = float(mu)
        self.delta = float(delta)
        self.params = ParamVector.of(("mu", "delta"), (self.mu, self.delta))

    def __repr__(self):
        return f"Uniform1D(mu={self.mu!r}, delta={self.delta!r})"

    def with_values(self, values):
        return Uniform1D(*values)

    @property
    def lo(self):
        return self.mu - self.delta

    @property
    def hi(self):
        return self.mu + self.delta

    def _inside(self, x):
        return (x >= self.lo) & (x <= self.hi)

    def _check_not_edge(self, x):
        if np.any((x == self.lo) | (x == self.hi)):
            raise DomainError("uniform density is not differentiable at its edges")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self._inside(x), 0.5 / self.delta, 0.0)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self._inside(x), -np.log(2.0 * self.delta), -np.inf)

    def dlogpdf_dtheta(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(self._inside(x)):
            raise DomainError("score undefined outside the uniform support")
        self._check_not_edge(x)
        return np.stack([np.zeros(x.shape), np.full(x.shape, -1.0 / self.delta)], axis=-1)

    def dpdf_dtheta(self, x):
        x = np.asarray(x, dtype=float)
        self._check_not_edge(x)
        inside = self._inside(x)
        return np.stack([np.zeros(x.shape), np.where(inside, -0.5 / self.delta**2, 0.0)], axis=-1)

    def dpdf_dx(self, x):
        x = np.asarray(x, dtype=float)
        self._check_not_edge(x)
        return np.zeros(x.shape)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (2.0 * self.delta), 0.0, 1.0)

    def dcdf_dtheta(self, x):
        x = np.asarray(x, dtype=float)
        self._check_not_edge(x)
        inside = self._inside(x)
        dmu = np.where(inside, -0.5 / self.delta, 0.0)
        ddelta = np.where(inside, -(x - self.mu) / (2.0 * self.delta**2), 0.0)
        return np.stack([dmu, ddelta], axis=-1)

    def reparam_g(self, eps):
        return self.mu + self.delta * np.asarray(eps, dtype=float)

    def dg_dtheta(self, eps):
        eps = np.asarray(eps, dtype=float)
        return np.stack([np.ones_like(eps), eps], axis=-1)

    def standardize_S(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.delta

    def standard_from_uniform(self, u):
        return 2.0 * np.asarray(u, dtype=float) - 1.0

    def standard_pdf(self, eps):
        eps = np.asarray(eps, dtype=float)
        return np.where(np.abs(eps) <= 1.0, 0.5, 0.0)

    def standard_range(self):
        return (-1.0, 1.0)

    def reparam_div_velocity(self, x):
        shape = np.shape(x)
        return np.stack([np.zeros(shape), np.full(shape, 1.0 / self.delta)], axis=-1)

    def density_edges(self):
        jump = 0.5 / self.delta
        return [
            (self.lo, jump, np.array([1.0, -1.0])),
            (self.hi, -jump, np.array([1.0, 1.0])),
        ]

    def default_grid_bounds(self):
        return (self.lo, self.hi)


class TruncatedDiscrete(Distribution):
    """A base pmf restricted to ``{0, ..., ymax}`` and renormalized.

    ``base_pmf(y, theta)`` and ``base_dpmf(y, theta)`` take an integer array
    and the parameter values; ``base_dpmf`` returns shape ``y.shape + (P,)``.
    The derivative table includes the renormalization term, so it sums to
    zero over the support.
    """

    discrete = True

    def __init__(
        self,
        base_pmf: Callable[[np.ndarray, np.ndarray], np.ndarray],
        base_dpmf: Callable[[np.ndarray, np.ndarray], np.ndarray],
        theta: ParamVector,
        ymax: int,
        name: str = "discrete",
    ):
        if ymax < 1:
            raise ValueError("ymax must be at least 1")
        self.base_pmf = base_pmf
        self.base_dpmf = base_dpmf
        self.params = theta
        self.ymax = int(ymax)
        self.name = name
        ys = np.arange(self.ymax + 1)
        vals = theta.values
        raw = np.asarray(base_pmf(ys, vals), dtype=float)
        draw = np.asarray(base_dpmf(ys, vals), dtype=float).reshape(ys.size, len(theta))
        z = raw.sum()
        dz = draw.sum(axis=0)
        self._pmf = raw / z
        self._dpmf = draw / z - raw[:, None] * dz / z**2
        self._Q = np.cumsum(self._pmf)
        self._Q[-1] = 1.0
        self._dQ = np.cumsum(self._dpmf, axis=0)
        self._dQ[-1] = 0.0

    def __repr__(self):
        return f"TruncatedDiscrete({self.name}, theta={dict(self.params.entries)!r}, ymax={self.ymax})"

    def with_values(self, values):
        return TruncatedDiscrete(
            self.base_pmf, self.base_dpmf, ParamVector.of(self.params.names, values), self.ymax, self.name
        )

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.ymax + 1)

    def _index(self, y):
        y = np.asarray(y)
        yi = y.astype(np.int64)
        if np.any(yi != y) or np.any((yi < 0) | (yi > self.ymax)):
            raise DomainError(f"y outside support {{0..{self.ymax}}}")
        return yi

    def pmf(self, y):
        return self._pmf[self._index(y)]

    pdf = pmf

    def log_pdf(self, y):
        with np.errstate(divide="ignore"):
            return np.log(self.pmf(y))

    def dpmf_dtheta(self, y, i: int | None = None):
        out = self._dpmf[self._index(y)]
        return out if i is None else out[..., i]

    def dpdf_dtheta(self, y):
        return self.dpmf_dtheta(y)

    def dlogpdf_dtheta(self, y):
        p = self.pmf(y)
        if np.any(p <= 0):
            raise DomainError("score undefined where the pmf is zero")
        return self.dpmf_dtheta(y) / p[..., None]

    def discrete_Q(self, y):
        return self._Q[self._index(y)]

    def discrete_dQ_dtheta(self, y, i: int | None = None):
        out = self._dQ[self._index(y)]
        return out if i is None else out[..., i]

    def sample_batch(self, seed, start, count):
        u = rng.uniforms(seed, start, count)
        return np.minimum(np.searchsorted(self._Q, u, side="left"), self.ymax)

    @classmethod
    def poisson(cls, rate: float, ymax: int) -> "TruncatedDiscrete":
        def pmf(y, th):
            return poisson.pmf(y, th[0])

        def dpmf(y, th):
            return (poisson.pmf(y, th[0]) * (y / th[0] - 1.0))[:, None]

        return cls(pmf, dpmf, ParamVector.of(("rate",), (rate,)), ymax, name="poisson")

    @classmethod
    def two_point(cls, p0: float) -> "TruncatedDiscrete":
        """``p(0) = p0``, ``p(1) = 1 - p0``."""
        if not 0.0 < p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")

        def pmf(y, th):
            return np.where(y == 0, th[0], 1.0 - th[0])

        def dpmf(y, th):
            return np.where(y == 0, 1.0, -1.0)[:, None]

        return cls(pmf, dpmf, ParamVector.of(("p0",), (p0,)), 1, name="two-point")
