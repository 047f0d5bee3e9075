"""Invariant suites behind ``mcgrad check``.

Each check returns a :class:`CheckResult`; the CLI prints ``lines`` and maps
``ok`` to the exit code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from ..dists import DiagonalGaussian, Distribution, Gaussian1D, Uniform1D
from ..errors import ConfigError
from ..estimators import EstimatorSpec, TestFunction, _flow_terms, batch_estimate, build_flow, lr_contribution, rp_contribution
from ..flows import transport_residual, zero_flow_for
from ..oracle import oracle_gradient, quadrature_expectation
from .registry import bump, quadsin

TRANSPORT_FLOWS = ("reparam", "implicit", "cdf")


@dataclass
class CheckResult:
    name: str
    ok: bool = True
    lines: list[str] = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def record(self, label: str, value: float, limit: float, *, below: bool = True) -> None:
        passed = bool(value < limit) if below else bool(value > limit)
        self.ok &= passed
        rel = "<" if below else ">"
        self.values[label] = value
        self.lines.append(f"{'PASS' if passed else 'FAIL'} {self.name} {label}: {value:.3e} (need {rel} {limit:.0e})")


def transport_grid(dist: Distribution, n_points: int = 101, span: float = 5.0) -> np.ndarray:
    """Evaluation points: ``mu +- span*sigma`` for Gaussians, the open support for uniforms."""
    if isinstance(dist, Gaussian1D):
        return np.linspace(dist.mu - span * dist.sigma, dist.mu + span * dist.sigma, n_points)
    if isinstance(dist, DiagonalGaussian):
        t = np.linspace(-span, span, n_points)[:, None]
        return dist.mu + t * dist.sigma
    if isinstance(dist, Uniform1D):
        return np.linspace(dist.lo, dist.hi, n_points + 2)[1:-1]
    raise ConfigError(f"transport check needs a continuous distribution, got {dist!r}")


def check_transport(
    dist: Distribution,
    flows=TRANSPORT_FLOWS,
    *,
    n_points: int = 101,
    span: float = 5.0,
    tol_analytic: float = 1e-8,
    tol_numeric: float = 1e-4,
) -> CheckResult:
    """max |div(p u) + dp/dtheta| for pathwise flows, analytic and numeric divergence."""
    res = CheckResult("transport")
    x = transport_grid(dist, n_points, span)
    for kind in flows:
        if kind == "cdf" and dist.event_dim:
            continue
        flow = build_flow(dist, kind)
        for numeric, tol in ((False, tol_analytic), (True, tol_numeric)):
            r = np.abs(transport_residual(dist, flow, x, numeric=numeric))
            for i, name in enumerate(dist.params.names):
                label = f"{kind} {'numeric' if numeric else 'analytic'} {name} max|residual|"
                res.record(label, float(np.max(r[..., i])), tol)
    return res


def rel_diff(a, b):
    """``|a - b| / max(|a|, |b|, 1)``; the unit floor keeps exact zeros from amplifying rounding."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


def check_reductions(
    dist: Distribution, phi, *, n: int = 10_000, seed: int = 0, tol_lr: float = 1e-12, tol_rp: float = 1e-8
) -> CheckResult:
    """Per-sample: zero flow with q = p equals LR; reparam flow with q = p equals RP."""
    res = CheckResult("reductions")
    x = dist.sample_batch(seed, 0, n)
    flow_zero, _ = _flow_terms(dist, zero_flow_for(dist), None, phi, x)
    res.record("max rel |flow(u=0) - LR|", float(np.max(rel_diff(flow_zero, lr_contribution(dist, phi, x)))), tol_lr)
    if dist.reparameterizable:
        flow_rp, _ = _flow_terms(dist, build_flow(dist, "reparam"), None, phi, x)
        res.record("max rel |flow(reparam) - RP|", float(np.max(rel_diff(flow_rp, rp_contribution(dist, phi, x)))), tol_rp)
    return res


def check_uniqueness(dist: Gaussian1D, *, n: int = 200_000, seed: int = 0, factor: float = 10.0) -> CheckResult:
    """A weighting other than the score is biased for some phi.

    The candidate weight is ``score + delta`` with a smooth bump ``delta``;
    for ``phi = delta`` its expectation is off by ``E_p[delta^2]``, which must
    exceed ``factor`` standard errors, and the MC estimate must sit that far
    from the oracle.
    """
    if not isinstance(dist, Gaussian1D):
        raise ConfigError("uniqueness check needs a gaussian")
    res = CheckResult("uniqueness")
    delta = bump(dist.mu, dist.sigma)
    x = dist.sample_batch(seed, 0, n)
    d = np.asarray(delta.value(x))
    w = np.asarray(dist.dlogpdf_dtheta(x)) + d[:, None]
    contrib = w * d[:, None]
    mean = contrib.mean(axis=0)
    se = np.sqrt(contrib.var(axis=0, ddof=1) / n)
    truth = oracle_gradient(dist, delta)
    bias = quadrature_expectation(dist, bump_squared(delta))
    for i, name in enumerate(dist.params.names):
        res.record(f"{name} E[delta^2]/SE", bias / se[i], factor, below=False)
        res.record(f"{name} |candidate - oracle|/SE", abs(mean[i] - truth[i]) / se[i], factor, below=False)
    return res


def bump_squared(delta: TestFunction) -> TestFunction:
    return TestFunction(f"{delta.name}^2", lambda x: np.asarray(delta.value(x)) ** 2, lambda x: 2 * delta.value(x) * delta.grad(x))


def pilot_omega(
    dist: Gaussian1D,
    a: float = 0.1,
    omegas=(1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0),
    *,
    n: int = 20_000,
    seed: int = 0,
    ratio: float = 2.0,
) -> float:
    """Smallest ``omega`` whose pilot Var(RP)/Var(LR) for d/dmu exceeds ``ratio``.

    Pilot draws use a seed derived from ``seed`` so they never overlap the
    replicates of the main comparison.
    """
    pilot = rng.derive_seed(seed, 7)
    for omega in omegas:
        phi = quadsin(a, omega)
        v_lr = batch_estimate(EstimatorSpec("lr"), dist, phi, n, pilot).variance[0]
        v_rp = batch_estimate(EstimatorSpec("rp"), dist, phi, n, pilot).variance[0]
        if v_rp > ratio * v_lr:
            return float(omega)
    raise RuntimeError("no omega in the sweep makes RP noisier than LR")


__all__ = [
    "CheckResult",
    "check_reductions",
    "check_transport",
    "check_uniqueness",
    "pilot_omega",
    "rel_diff",
    "transport_grid",
]
