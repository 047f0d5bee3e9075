"""Importance sampling distributions for LR-type estimators.

The centrepiece is the L-distribution: for a Gaussian base N(mu, sigma^2),
sampling whole horizontal slices of probability mass and splitting each
slice between its two edges yields the density

    q_L(x) = (x - mu)^2 / (sqrt(2 pi) sigma^3) * exp(-(x - mu)^2 / (2 sigma^2)),

a Maxwell-Boltzmann law mirrored about ``mu``. Under q_L the LR weight for
d/dmu collapses to ``1 / (x - mu)``, so the estimator has zero variance for
``phi(x) = x - mu``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import rng
from .dists import Distribution
from .errors import ZeroDensityError

log = logging.getLogger(__name__)

WEIGHT_CLIP = 1e12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_DEGENERATE = 1e-300
# dimensions 0..2 carry eps_x, eps_h, sign; redraws use the next triples
_STREAMS = 3
_MAX_REDRAWS = 8


@dataclass(frozen=True)
class LDistribution:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def pdf(self, x):
        r = np.asarray(x, dtype=float) - self.mu
        return r * r * _INV_SQRT_2PI / self.sigma**3 * np.exp(-0.5 * (r / self.sigma) ** 2)

    def base_pdf(self, x):
        r = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _INV_SQRT_2PI / self.sigma * np.exp(-0.5 * r * r)

    def sample(self, seed: int, index: int) -> "SliceDraw":
        b = self.sample_batch(seed, index, 1)
        return SliceDraw(float(b.x[0]), float(b.eps_x[0]), float(b.eps_h[0]), int(b.sign[0]))

    def sample_batch(self, seed: int, start: int, count: int) -> "SliceBatch":
        """Draws for indices ``start .. start+count-1``.

        ``eps_x ~ N(0,1)``, ``eps_h ~ U(0,1)``, a fair sign, and
        ``x = mu + sign * sigma * sqrt(-2 log eps_h + eps_x^2)``. A draw whose
        realized offset ``x - mu`` underflows to (near) zero is redrawn from the
        next stream triple and counted in ``rejected``.
        """
        eps_x, eps_h, sign, x = self._draw(seed, start, count, 0)
        rejected = 0
        for attempt in range(1, _MAX_REDRAWS + 1):
            bad = np.abs(x - self.mu) < _DEGENERATE
            if not bad.any():
                break
            rejected += int(bad.sum())
            e2, h2, s2, x2 = self._draw(seed, start, count, attempt * _STREAMS)
            eps_x = np.where(bad, e2, eps_x)
            eps_h = np.where(bad, h2, eps_h)
            sign = np.where(bad, s2, sign)
            x = np.where(bad, x2, x)
        if rejected:
            log.warning("L-distribution: %d degenerate slice draws redrawn", rejected)
        return SliceBatch(x, eps_x, eps_h, sign, rejected)

    def _draw(self, seed, start, count, offset):
        u = rng.uniform_block(seed, start, count, _STREAMS, offset=offset)
        eps_x = ndtri(u[:, 0])
        eps_h = u[:, 1]
        sign = np.where(u[:, 2] < 0.5, 1, -1)
        radius = self.sigma * np.sqrt(-2.0 * np.log(eps_h) + eps_x * eps_x)
        return eps_x, eps_h, sign, self.mu + sign * radius


@dataclass(frozen=True)
class SliceDraw:
    x: float
    eps_x: float
    eps_h: float
    sign: int


@dataclass(frozen=True)
class SliceBatch:
    x: np.ndarray
    eps_x: np.ndarray
    eps_h: np.ndarray
    sign: np.ndarray
    rejected: int = 0


def l_pdf(L: LDistribution, x):
    return L.pdf(x)


def l_sample(L: LDistribution, seed: int, index: int) -> SliceDraw:
    return L.sample(seed, index)


def slice_lr_contribution(L: LDistribution, phi, draw) -> np.ndarray:
    """d/dmu contribution ``phi(x) / (x - mu)`` for draws from ``L``.

    ``draw`` is a :class:`SliceDraw` or :class:`SliceBatch`. The divisor is
    the realized offset of the point where ``phi`` was evaluated; near the
    mode that subtraction is exact, so no cancellation enters.
    """
    x = np.asarray(draw.x, dtype=float)
    offset = x - L.mu
    return np.asarray(phi.value(x), dtype=float) / offset


def clip_weights(w: np.ndarray) -> tuple[np.ndarray, int]:
    over = w > WEIGHT_CLIP
    count = int(np.count_nonzero(over))
    if count:
        log.warning("clipped %d importance weights above %g", count, WEIGHT_CLIP)
    return np.where(over, WEIGHT_CLIP, w), count


def importance_weight(p: Distribution, q: Distribution, x) -> np.ndarray:
    """``p(x) / q(x)``, clipped at ``WEIGHT_CLIP``."""
    qx = np.asarray(q.pdf(x), dtype=float)
    if np.any(qx <= 0):
        raise ZeroDensityError("sampling density q is zero at a sample point")
    return clip_weights(np.asarray(p.pdf(x), dtype=float) / qx)[0]
