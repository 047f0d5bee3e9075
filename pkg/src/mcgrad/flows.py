"""Probability flow fields and the transport equation.

A flow assigns every parameter ``theta_i`` a velocity field ``u_i(x)`` that
says how probability mass at ``x`` moves when ``theta_i`` is perturbed.
``div(p u_i) + dp/dtheta_i`` is the transport residual; it is identically
zero for pathwise (reparameterization-type) flows and equals ``dp/dtheta_i``
for the zero flow.

``FlowField.field(x)`` returns all parameters at once with shape
``B + event + (P,)`` (see :mod:`mcgrad.dists` for the shape conventions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dists import Distribution, supports
from .errors import DimensionMismatch, DomainError, UnsupportedCapability

DENSITY_FLOOR = 1e-300
_CBRT_EPS = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class FlowField:
    dim_x: int
    n_params: int
    field: Callable[[np.ndarray], np.ndarray]
    analytic_div_pu: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vector_points: bool = False
    name: str = "flow"
    is_zero: bool = False

    def velocity(self, x, i: int | None = None):
        """Velocity of parameter ``i`` at ``x`` (all parameters if ``i`` is None)."""
        u = self.field(x)
        return u if i is None else u[..., i]


def _mask(dist: Distribution, x, u):
    # zero velocity where the density has vanished, so p*u decays in the tails
    p = np.asarray(dist.pdf(x))
    keep = p > DENSITY_FLOOR
    if dist.event_dim:
        keep = keep[..., None, None]
    else:
        keep = keep[..., None]
    return np.where(keep, u, 0.0)


def _product_rule_div(dist: Distribution, x, u, div_u):
    """div(p u) = grad p . u + p div u, for each parameter."""
    p = np.asarray(dist.pdf(x))
    grad_p = np.asarray(dist.dpdf_dx(x))
    if dist.event_dim:
        return np.einsum("...j,...jp->...p", grad_p, u) + p[..., None] * div_u
    return grad_p[..., None] * u + p[..., None] * div_u


def zero_flow(dim_x: int, n_params: int, *, vector_points: bool | None = None) -> FlowField:
    """The flow that keeps every box fixed; it turns the flow estimator into LR."""
    if vector_points is None:
        vector_points = dim_x > 1
    event = (dim_x,) if vector_points else ()

    def field(x):
        batch = np.shape(x)[:-1] if vector_points else np.shape(x)
        return np.zeros(batch + event + (n_params,))

    def div(x):
        batch = np.shape(x)[:-1] if vector_points else np.shape(x)
        return np.zeros(batch + (n_params,))

    return FlowField(dim_x, n_params, field, div, vector_points, name="zero", is_zero=True)


def zero_flow_for(dist: Distribution) -> FlowField:
    return zero_flow(dist.dim_x, dist.n_params, vector_points=bool(dist.event_dim))


def reparam_flow(dist: Distribution) -> FlowField:
    """``u_i(x) = dg/dtheta_i`` evaluated at ``eps = S(x)``."""
    if not dist.reparameterizable:
        raise UnsupportedCapability(f"{type(dist).__name__} has no reparameterization")

    def field(x):
        return _mask(dist, x, dist.dg_dtheta(dist.standardize_S(x)))

    div = None
    if supports(dist, "reparam_div_velocity"):

        def div(x):
            return _product_rule_div(dist, x, field(x), dist.reparam_div_velocity(x))

    return FlowField(dist.dim_x, dist.n_params, field, div, bool(dist.event_dim), name="reparam")


def cdf_flow(dist: Distribution) -> FlowField:
    """``u_i(x) = -(dQ/dtheta_i) / p`` for a 1-D distribution with CDF ``Q``."""
    if dist.event_dim:
        raise UnsupportedCapability("the CDF flow is defined for 1-D distributions only")
    if not supports(dist, "dcdf_dtheta"):
        raise UnsupportedCapability(f"{type(dist).__name__} has no CDF derivative")

    def field(x):
        p = np.asarray(dist.pdf(x))
        dq = np.asarray(dist.dcdf_dtheta(x))
        safe = np.where(p > DENSITY_FLOOR, p, 1.0)
        return np.where((p > DENSITY_FLOOR)[..., None], -dq / safe[..., None], 0.0)

    def div(x):
        # d/dx of -dQ/dtheta is -dp/dtheta
        return -np.asarray(dist.dpdf_dtheta(x))

    return FlowField(1, dist.n_params, field, div, False, name="cdf")


def implicit_flow(dist: Distribution) -> FlowField:
    """``u_i = -(dS/dx)^{-1} dS/dtheta_i`` from the standardization function.

    Needs elementwise S-derivatives (``dS_dx`` etc.); 1-D distributions
    without them fall back to :func:`cdf_flow`, with which they coincide.
    """
    if not hasattr(dist, "dS_dx"):
        if dist.event_dim:
            raise UnsupportedCapability("implicit flow needs S Jacobians for multivariate distributions")
        flow = cdf_flow(dist)
        return FlowField(flow.dim_x, flow.n_params, flow.field, flow.analytic_div_pu, False, name="implicit")

    def _parts(x):
        s_x = np.asarray(dist.dS_dx(x))
        if np.any(s_x == 0):
            raise DomainError("singular standardization Jacobian")
        return s_x[..., None], np.asarray(dist.dS_dtheta(x))

    def field(x):
        s_x, s_t = _parts(x)
        return _mask(dist, x, -s_t / s_x)

    def div(x):
        s_x, s_t = _parts(x)
        s_xx = np.asarray(dist.d2S_dx2(x))[..., None]
        s_tx = np.asarray(dist.d2S_dxdtheta(x))
        du = -(s_tx * s_x - s_t * s_xx) / s_x**2
        div_u = du.sum(axis=-2) if dist.event_dim else du
        return _product_rule_div(dist, x, field(x), div_u)

    return FlowField(dist.dim_x, dist.n_params, field, div, bool(dist.event_dim), name="implicit")


def scaled_flow(base: FlowField, k: float) -> FlowField:
    k = float(k)

    def field(x):
        return k * base.field(x)

    div = None
    if base.analytic_div_pu is not None:

        def div(x):
            return k * base.analytic_div_pu(x)

    return FlowField(
        base.dim_x, base.n_params, field, div, base.vector_points, name=f"{k:g}*{base.name}", is_zero=base.is_zero or k == 0.0
    )


def sum_flow(a: FlowField, b: FlowField) -> FlowField:
    if (a.dim_x, a.n_params, a.vector_points) != (b.dim_x, b.n_params, b.vector_points):
        raise DimensionMismatch(f"cannot add flows {a.name} and {b.name}")

    def field(x):
        return a.field(x) + b.field(x)

    div = None
    if a.analytic_div_pu is not None and b.analytic_div_pu is not None:

        def div(x):
            return a.analytic_div_pu(x) + b.analytic_div_pu(x)

    return FlowField(a.dim_x, a.n_params, field, div, a.vector_points, name=f"{a.name}+{b.name}", is_zero=a.is_zero and b.is_zero)


def numeric_div_pu(dist: Distribution, flow: FlowField, x):
    """Central-difference divergence of ``p u``; step ``cbrt(eps) * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)

    def flux(pts):
        p = np.asarray(dist.pdf(pts))
        u = flow.field(pts)
        return (p[..., None, None] if dist.event_dim else p[..., None]) * u

    if not dist.event_dim:
        h = _CBRT_EPS * np.maximum(1.0, np.abs(x))
        xp, xm = x + h, x - h
        return (flux(xp) - flux(xm)) / (xp - xm)[..., None]

    total = 0.0
    for j in range(dist.event_dim):
        h = _CBRT_EPS * np.maximum(1.0, np.abs(x[..., j]))
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h
        xm[..., j] -= h
        step = (xp[..., j] - xm[..., j])[..., None]
        total = total + (flux(xp)[..., j, :] - flux(xm)[..., j, :]) / step
    return total


def div_pu(dist: Distribution, flow: FlowField, x, i: int | None = None, *, numeric: bool = False):
    """``div(p u_i)`` at ``x``; analytic when the flow provides it, else numeric."""
    if flow.analytic_div_pu is not None and not numeric:
        out = np.asarray(flow.analytic_div_pu(x))
    else:
        out = numeric_div_pu(dist, flow, x)
    return out if i is None else out[..., i]


def transport_residual(dist: Distribution, flow: FlowField, x, i: int | None = None, *, numeric: bool = False):
    """``div(p u_i) + dp/dtheta_i``; zero for pathwise flows."""
    out = div_pu(dist, flow, x, numeric=numeric) + np.asarray(dist.dpdf_dtheta(x))
    return out if i is None else out[..., i]
