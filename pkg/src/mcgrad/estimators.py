"""Single-sample gradient contributions and their batch aggregation.

Every contribution function is vectorized: ``x`` may be a single point or a
batch, and the result carries a trailing parameter axis. The general flow
estimator

    (p/q) u_i . grad phi + (div(p u_i) + dp/dtheta_i) / q * phi

contains LR (``u = 0, q = p``) and RP (pathwise ``u``, ``q = p``) as its
two endpoints; all other estimators here are special cases or close
relatives of it.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .dists import Distribution, Gaussian1D, DiagonalGaussian, TruncatedDiscrete, Uniform1D
from .errors import ConfigError, DomainError, McgradError, UnsupportedCapability, ZeroDensityError
from .flows import (
    FlowField,
    cdf_flow,
    div_pu,
    implicit_flow,
    reparam_flow,
    scaled_flow,
    zero_flow_for,
)
from .importance import LDistribution, clip_weights, slice_lr_contribution

log = logging.getLogger(__name__)

CHUNK = 1 << 14
PILOT_N = 2000


@dataclass(frozen=True)
class TestFunction:
    """phi(x) with its gradient and declared 1-D jump discontinuities.

    ``discontinuities`` holds ``(location, jump)`` pairs where ``jump`` is the
    right limit minus the left limit. ``separable``, when set, is a 1-D
    function ``f`` with ``value(x) = sum_j f(x_j)``; quadrature oracles use it
    for vector points.
    """

    __test__ = False  # not a pytest class

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    discontinuities: tuple[tuple[float, float], ...] = ()
    separable: Optional["TestFunction"] = None
    vector: bool = False


@dataclass(frozen=True)
class GradEstimate:
    mean: np.ndarray
    variance: np.ndarray
    std_error: np.ndarray
    n: int
    seed: int
    param_names: tuple[str, ...] = ()
    clipped: int = 0
    correction: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# single-sample contributions
# ---------------------------------------------------------------------------


def lr_contribution(dist: Distribution, phi: TestFunction, x, baseline=0.0) -> np.ndarray:
    """Score times ``phi - b``; ``baseline`` is a scalar or one value per parameter."""
    p = np.asarray(dist.pdf(x))
    if np.any(p <= 0):
        raise ZeroDensityError("score undefined where the density is zero")
    score = np.asarray(dist.dlogpdf_dtheta(x))
    centered = np.asarray(phi.value(x), dtype=float)[..., None] - np.asarray(baseline, dtype=float)
    return score * centered


def optimal_baseline(dist: Distribution, phi: TestFunction, samples) -> np.ndarray:
    """Variance-minimizing constant baseline per parameter, estimated from ``samples``."""
    samples = np.asarray(samples)
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    s2 = np.asarray(dist.dlogpdf_dtheta(samples)) ** 2
    den = s2.sum(axis=0)
    if np.any(den == 0):
        raise DomainError("all-zero score for some parameter; optimal baseline undefined")
    return (s2 * np.asarray(phi.value(samples), dtype=float)[:, None]).sum(axis=0) / den


def antithetic_lr_pair(dist: Distribution, phi: TestFunction, eps, baseline=0.0) -> np.ndarray:
    """LR averaged over the mirrored pair ``mu +/- sigma * eps``.

    Mean entries reduce to ``(eps/sigma) (phi(x+) - phi(x-)) / 2``, in which a
    baseline cancels. Scale entries are the pair average of the plain score
    terms, so ``baseline`` never enters the result.
    """
    if not isinstance(dist, (Gaussian1D, DiagonalGaussian)):
        raise UnsupportedCapability("antithetic pairs need a Gaussian distribution")
    eps = np.asarray(eps, dtype=float)
    mu, sigma = np.asarray(dist.mu), np.asarray(dist.sigma)
    f_plus = np.asarray(phi.value(mu + sigma * eps), dtype=float)
    f_minus = np.asarray(phi.value(mu - sigma * eps), dtype=float)
    if dist.event_dim:
        f_plus, f_minus = f_plus[..., None], f_minus[..., None]
    d_mu = eps / sigma * (f_plus - f_minus) / 2.0
    d_sigma = (eps * eps - 1.0) / sigma * (f_plus + f_minus) / 2.0
    if dist.event_dim:
        return np.concatenate([d_mu, d_sigma], axis=-1)
    return np.stack([d_mu, d_sigma], axis=-1)


def _dot_grad(dist: Distribution, phi: TestFunction, x, u):
    g = np.asarray(phi.grad(x), dtype=float)
    if dist.event_dim:
        return np.einsum("...j,...jp->...p", g, u)
    return g[..., None] * u


def rp_contribution(dist: Distribution, phi: TestFunction, x) -> np.ndarray:
    """grad phi . dg/dtheta at ``eps = S(x)``."""
    if not dist.reparameterizable:
        raise UnsupportedCapability(f"{type(dist).__name__} is not reparameterizable")
    u = dist.dg_dtheta(dist.standardize_S(x))
    return _dot_grad(dist, phi, x, u)


def _flow_terms(dist, flow, q, phi, x):
    p = np.asarray(dist.pdf(x), dtype=float)
    if q is None or q is dist:
        qx = p
        w = np.ones_like(p)
        clipped = 0
    else:
        qx = np.asarray(q.pdf(x), dtype=float)
        if np.any(qx <= 0):
            raise ZeroDensityError("sampling density q is zero at a sample point")
        w, clipped = clip_weights(p / qx)
    if np.any(qx <= 0):
        raise ZeroDensityError("density is zero at a sample point")
    value = np.asarray(phi.value(x), dtype=float)[..., None]
    scalar = np.asarray(dist.dpdf_dtheta(x), dtype=float)
    if not flow.is_zero:
        scalar = div_pu(dist, flow, x) + scalar
    out = scalar / qx[..., None] * value
    if not flow.is_zero:
        out = w[..., None] * _dot_grad(dist, phi, x, flow.field(x)) + out
    return out, clipped


def flow_contribution(dist: Distribution, flow: FlowField, q: Optional[Distribution], phi: TestFunction, x) -> np.ndarray:
    """General flow estimator for samples ``x ~ q`` (``q=None`` means ``q = p``)."""
    return _flow_terms(dist, flow, q, phi, x)[0]


def go_contribution(dist: TruncatedDiscrete, phi_discrete, y) -> np.ndarray:
    """``-(dQ(y)/dtheta) / p(y) * (phi(y+1) - phi(y))``; zero at ``y = ymax``."""
    f = getattr(phi_discrete, "value", phi_discrete)
    y = np.asarray(y)
    p = np.asarray(dist.pmf(y))
    if np.any(p <= 0):
        raise ZeroDensityError("GO contribution at a zero-probability point")
    nxt = np.minimum(y + 1, dist.ymax)
    diff = np.asarray(f(nxt), dtype=float) - np.asarray(f(y), dtype=float)
    return -np.asarray(dist.discrete_dQ_dtheta(y)) / p[..., None] * diff[..., None]


def jump_correction(dist: Distribution, flow: FlowField, phi: TestFunction, i: int | None = None):
    """Mass flux through the jumps of ``phi``: ``sum_c p(c) u(c) jump(c)``.

    The flow estimator misses exactly this amount at a jump of ``phi`` (the
    piecewise divergence integrates to minus the flux), so it is added to
    the batch mean. Points outside the support contribute zero.
    """
    if dist.event_dim:
        raise UnsupportedCapability("jump corrections are implemented for 1-D points only")
    total = np.zeros(dist.n_params)
    for loc, jump in phi.discontinuities:
        loc = np.asarray(float(loc))
        p = float(dist.pdf(loc))
        if p <= 0:
            continue
        total += p * np.asarray(flow.field(loc)) * jump
    return total if i is None else total[i]


def moving_boundary_gradient(dist: Uniform1D, phi) -> np.ndarray:
    """Exact d/dmu for a uniform: only the two moving edges matter.

    Returns one entry per parameter; the ``delta`` entry is NaN (it also
    needs the interior mass, so it is left to the quadrature oracle).
    """
    f = getattr(phi, "value", phi)
    d_mu = (float(f(np.asarray(dist.hi))) - float(f(np.asarray(dist.lo)))) / (2.0 * dist.delta)
    return np.array([d_mu, np.nan])


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

ESTIMATOR_KINDS = ("lr", "lr-baseline", "lr-optimal-baseline", "lr-antithetic", "rp", "flow", "slice", "go")
FLOW_KINDS = ("reparam", "cdf", "implicit", "zero")


@dataclass(frozen=True)
class EstimatorSpec:
    """What to run in :func:`batch_estimate`.

    ``baseline`` fixes the LR baseline for ``lr``; ``lr-baseline`` and
    ``lr-optimal-baseline`` estimate theirs from an independent pilot batch.
    ``k`` scales the flow (``k * u``); ``q`` is the sampling distribution for
    ``lr`` and ``flow`` (None means p).
    """

    kind: str
    flow: str = "reparam"
    k: float = 1.0
    q: Optional[Distribution] = None
    baseline: float = 0.0
    jump_correction: bool = True
    pilot_n: int = PILOT_N

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator {self.kind!r}; expected one of {ESTIMATOR_KINDS}")
        if self.flow not in FLOW_KINDS:
            raise ConfigError(f"unknown flow {self.flow!r}; expected one of {FLOW_KINDS}")


def build_flow(dist: Distribution, kind: str, k: float = 1.0) -> FlowField:
    base = {
        "reparam": reparam_flow,
        "cdf": cdf_flow,
        "implicit": implicit_flow,
        "zero": zero_flow_for,
    }[kind](dist)
    return base if k == 1.0 else scaled_flow(base, k)


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MCGRAD_THREADS", "1") or 1)
    return max(1, threads)


def _pilot_samples(dist, seed, n):
    return dist.sample_batch(rng.derive_seed(seed, 1), 0, n)


def _chunk_fn(spec: EstimatorSpec, dist: Distribution, phi: TestFunction, seed: int):
    """Return ``(fn(start, count) -> (contributions, clipped), correction)``."""
    kind = spec.kind
    correction = None

    if kind == "go":
        if not isinstance(dist, TruncatedDiscrete):
            raise ConfigError("the GO estimator needs a discrete distribution")
        return (lambda s, c: (go_contribution(dist, phi, dist.sample_batch(seed, s, c)), 0)), None

    if isinstance(dist, TruncatedDiscrete):
        if kind not in ("lr", "lr-baseline", "lr-optimal-baseline"):
            raise ConfigError(f"estimator {kind!r} is not available for discrete distributions")

    if kind == "slice":
        if not isinstance(dist, Gaussian1D):
            raise ConfigError("the slice estimator needs a Gaussian1D base")
        L = LDistribution(dist.mu, dist.sigma)

        def fn(s, c):
            d_mu = slice_lr_contribution(L, phi, L.sample_batch(seed, s, c))
            return np.stack([d_mu, np.full_like(d_mu, np.nan)], axis=-1), 0

        return fn, None

    if kind == "lr" and spec.q is not None:
        kind = "flow"
        spec = EstimatorSpec("flow", flow="zero", q=spec.q)

    if kind in ("lr", "lr-baseline", "lr-optimal-baseline"):
        if kind == "lr":
            b = spec.baseline
        elif kind == "lr-baseline":
            b = float(np.mean(phi.value(_pilot_samples(dist, seed, spec.pilot_n))))
        else:
            b = optimal_baseline(dist, phi, _pilot_samples(dist, seed, spec.pilot_n))
        return (lambda s, c: (lr_contribution(dist, phi, dist.sample_batch(seed, s, c), b), 0)), None

    if kind == "lr-antithetic":
        return (lambda s, c: (antithetic_lr_pair(dist, phi, dist.standard_batch(seed, s, c)), 0)), None

    if kind == "rp":
        flow = reparam_flow(dist)
        fn = lambda s, c: (rp_contribution(dist, phi, dist.sample_batch(seed, s, c)), 0)  # noqa: E731
    else:
        flow = build_flow(dist, spec.flow, spec.k)
        sampler = spec.q if spec.q is not None else dist
        fn = lambda s, c: _flow_terms(dist, flow, spec.q, phi, sampler.sample_batch(seed, s, c))  # noqa: E731

    if phi.discontinuities and spec.jump_correction and not flow.is_zero:
        correction = jump_correction(dist, flow, phi)
    return fn, correction


def _locate_failure(fn, start, count, exc):
    for idx in range(start, start + count):
        try:
            fn(idx, 1)
        except McgradError as inner:
            return type(inner)(f"sample index {idx}: {inner}")
    return type(exc)(f"samples {start}..{start + count - 1}: {exc}")


def batch_estimate(
    spec: EstimatorSpec,
    dist: Distribution,
    phi: TestFunction,
    n: int,
    seed: int,
    threads: int | None = None,
) -> GradEstimate:
    """Average ``n`` contributions drawn with the ``(seed, index)`` contract.

    Contributions are gathered in index order and reduced once with numpy's
    pairwise summation, so the result does not depend on ``threads``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    fn, correction = _chunk_fn(spec, dist, phi, seed)
    starts = list(range(0, n, CHUNK))

    def run(start):
        count = min(CHUNK, n - start)
        try:
            return fn(start, count)
        except McgradError as exc:
            raise _locate_failure(fn, start, count, exc) from exc

    workers = min(_threads(threads), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    contrib = np.concatenate([np.asarray(c, dtype=float).reshape(-1, dist.n_params) for c, _ in parts])
    clipped = sum(k for _, k in parts)
    mean = contrib.mean(axis=0)
    variance = contrib.var(axis=0, ddof=1) if n > 1 else np.zeros(dist.n_params)
    if correction is not None:
        mean = mean + correction
    return GradEstimate(
        mean=mean,
        variance=variance,
        std_error=np.sqrt(variance / n),
        n=n,
        seed=seed,
        param_names=dist.params.names,
        clipped=clipped,
        correction=correction,
    )
