"""Named test functions phi(x), each with an analytic gradient.

Names may carry arguments: ``linear(0.5)`` is ``x - 0.5``, ``step(0)`` a unit
jump at 0, ``quadsin(0.1, 50)`` is ``x^2 + 0.1 sin(50 x)``, ``sumsq(20)`` the
20-dimensional sum of squares. Every function's gradient is checked against
central finite differences when it is built.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

from ..errors import ConfigError, CrossCheckError
from ..estimators import TestFunction

_NAME = re.compile(r"^\s*([a-z][a-z0-9_-]*)\s*(?:\((.*)\))?\s*$")


def _arr(x):
    return np.asarray(x, dtype=float)


def linear(c: float = 0.0) -> TestFunction:
    name = "linear" if c == 0 else f"linear({c:g})"
    return TestFunction(name, lambda x: _arr(x) - c, lambda x: np.ones_like(_arr(x)))


def quadratic() -> TestFunction:
    return TestFunction("quadratic", lambda x: _arr(x) ** 2, lambda x: 2.0 * _arr(x))


def cubic() -> TestFunction:
    return TestFunction("cubic", lambda x: _arr(x) ** 3, lambda x: 3.0 * _arr(x) ** 2)


def sine() -> TestFunction:
    return TestFunction("sin", lambda x: np.sin(_arr(x)), lambda x: np.cos(_arr(x)))


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction(f"constant({c:g})", lambda x: np.full(np.shape(x), float(c)), lambda x: np.zeros(np.shape(x)))


def quadsin(a: float = 0.1, omega: float = 10.0) -> TestFunction:
    """``x^2 + a sin(omega x)``: small wiggles that inflate pathwise variance."""
    return TestFunction(
        f"quadsin({a:g},{omega:g})",
        lambda x: _arr(x) ** 2 + a * np.sin(omega * _arr(x)),
        lambda x: 2.0 * _arr(x) + a * omega * np.cos(omega * _arr(x)),
    )


def step(c: float = 0.0) -> TestFunction:
    """0 left of ``c``, 1 from ``c`` on."""
    return TestFunction(
        f"step({c:g})",
        lambda x: np.where(_arr(x) >= c, 1.0, 0.0),
        lambda x: np.zeros(np.shape(x)),
        discontinuities=((float(c), 1.0),),
    )


def bump(c: float = 0.0, w: float = 1.0) -> TestFunction:
    """Smooth compactly supported bump ``exp(1 - 1/(1 - t^2))``, ``t = (x - c)/w``."""

    def value(x):
        t = (_arr(x) - c) / w
        inside = np.abs(t) < 1
        ts = np.where(inside, t, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - ts * ts)), 0.0)

    def grad(x):
        t = (_arr(x) - c) / w
        inside = np.abs(t) < 1
        ts = np.where(inside, t, 0.0)
        return np.where(inside, value(x) * (-2.0 * ts / (1.0 - ts * ts) ** 2) / w, 0.0)

    return TestFunction(f"bump({c:g},{w:g})", value, grad)


def sumsq(d: int = 20) -> TestFunction:
    d = int(d)
    return TestFunction(
        f"sumsq({d})",
        lambda x: np.sum(_arr(x) ** 2, axis=-1),
        lambda x: 2.0 * _arr(x),
        separable=quadratic(),
        vector=True,
    )


_FACTORIES: dict[str, Callable[..., TestFunction]] = {
    "linear": linear,
    "quadratic": quadratic,
    "cubic": cubic,
    "sin": sine,
    "constant": constant,
    "quadsin": quadsin,
    "step": step,
    "bump": bump,
    "sumsq": sumsq,
}


def phi_registry() -> dict[str, Callable[..., TestFunction]]:
    """Factories by base name; see :func:`get_phi` for parsing full names."""
    return dict(_FACTORIES)


def validate_phi(phi: TestFunction, dim: int = 1, n_points: int = 64, tol: float = 1e-5) -> None:
    """Check ``phi.grad`` against central finite differences away from jumps."""
    grid = np.random.default_rng(12345).uniform(-3.0, 3.0, size=(n_points, dim) if phi.vector else n_points)
    if phi.discontinuities:
        keep = np.ones(n_points, dtype=bool)
        for c, _ in phi.discontinuities:
            keep &= np.abs(grid - c) > 1e-3
        grid = grid[keep]
    g = np.asarray(phi.grad(grid), dtype=float)
    h = 1e-6 * np.maximum(1.0, np.abs(grid))
    if phi.vector:
        fd = np.empty_like(grid)
        for j in range(grid.shape[1]):
            up, down = grid.copy(), grid.copy()
            up[:, j] += h[:, j]
            down[:, j] -= h[:, j]
            fd[:, j] = (phi.value(up) - phi.value(down)) / (up[:, j] - down[:, j])
    else:
        fd = (phi.value(grid + h) - phi.value(grid - h)) / ((grid + h) - (grid - h))
    bad = np.abs(fd - g) > tol * np.maximum(1.0, np.abs(g))
    if np.any(bad):
        raise CrossCheckError(f"gradient of {phi.name} fails finite-difference validation")


def get_phi(name: str) -> TestFunction:
    m = _NAME.match(name)
    if not m or m.group(1) not in _FACTORIES:
        raise ConfigError(f"unknown test function {name!r}; known: {sorted(_FACTORIES)}")
    args = []
    if m.group(2):
        try:
            args = [float(a) for a in m.group(2).split(",") if a.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad arguments in {name!r}") from exc
    try:
        phi = _FACTORIES[m.group(1)](*args)
    except TypeError as exc:
        raise ConfigError(f"bad arguments in {name!r}: {exc}") from exc
    validate_phi(phi, dim=int(args[0]) if m.group(1) == "sumsq" and args else 20 if m.group(1) == "sumsq" else 1)
    return phi
