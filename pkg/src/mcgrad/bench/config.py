"""Run configuration: one estimator on one (distribution, phi) pair.

Config files hold one run per ``[section]`` with ``key = value`` lines.
Keys mirror the CLI flags (``q-sigma`` or ``q_sigma``); unknown keys are
rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from ..dists import DiagonalGaussian, Distribution, Gaussian1D, TruncatedDiscrete, Uniform1D
from ..errors import ConfigError
from ..estimators import ESTIMATOR_KINDS, FLOW_KINDS, TestFunction
from .registry import get_phi

RUN_KINDS = ESTIMATOR_KINDS + ("boxes-lr", "boxes-rp", "oracle")
FAMILIES = ("gaussian", "diag-gaussian", "uniform", "poisson", "two-point")
_LR_KINDS = ("lr", "lr-baseline", "lr-optimal-baseline", "lr-antithetic")


@dataclass(frozen=True)
class DistSpec:
    family: str = "gaussian"
    mu: float = 0.0
    sigma: float = 1.0
    delta: float = 1.0
    rate: float = 3.0
    ymax: int = 30
    p0: float = 0.5
    dim: int = 1

    def build(self) -> Distribution:
        try:
            if self.family == "gaussian":
                return Gaussian1D(self.mu, self.sigma)
            if self.family == "diag-gaussian":
                return DiagonalGaussian.isotropic(self.dim, self.mu, self.sigma)
            if self.family == "uniform":
                return Uniform1D(self.mu, self.delta)
            if self.family == "poisson":
                return TruncatedDiscrete.poisson(self.rate, self.ymax)
            if self.family == "two-point":
                return TruncatedDiscrete.two_point(self.p0)
        except ValueError as exc:
            raise ConfigError(f"invalid {self.family} parameters: {exc}") from exc
        raise ConfigError(f"unknown distribution family {self.family!r}; expected one of {FAMILIES}")

    @property
    def discrete(self) -> bool:
        return self.family in ("poisson", "two-point")


@dataclass(frozen=True)
class RunConfig:
    estimator: str
    dist: DistSpec = field(default_factory=DistSpec)
    phi: str = "quadratic"
    n: int = 200_000
    reps: int = 1
    seed: int = 0
    k: float = 1.0
    flow: str = "reparam"
    q_sigma: Optional[float] = None
    jump_correction: bool = True
    n_boxes: int = 10_000
    dtheta: float = 1e-6

    @property
    def label(self) -> str:
        if self.estimator != "flow":
            return self.estimator
        extra = "" if self.k == 1.0 else f";k={self.k:g}"
        q = "" if self.q_sigma is None else f";q_sigma={self.q_sigma:g}"
        return f"flow[{self.flow}{extra}{q}]"

    def phi_function(self) -> TestFunction:
        return get_phi(self.phi)

    def validate(self) -> "RunConfig":
        """Reject incompatible (estimator, distribution, phi) combinations."""
        est, fam = self.estimator, self.dist.family
        if est not in RUN_KINDS:
            raise ConfigError(f"unknown estimator {est!r}; expected one of {RUN_KINDS}")
        if fam not in FAMILIES:
            raise ConfigError(f"unknown distribution family {fam!r}; expected one of {FAMILIES}")
        if self.flow not in FLOW_KINDS:
            raise ConfigError(f"unknown flow {self.flow!r}; expected one of {FLOW_KINDS}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.reps < 1 or 1 < self.reps < 30:
            raise ConfigError("reps must be 1 or at least 30")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.dist.dim < 1:
            raise ConfigError("dim must be positive")
        if fam != "diag-gaussian" and self.dist.dim != 1:
            raise ConfigError("dim applies to diag-gaussian only")

        phi = self.phi_function()
        if phi.vector != (fam == "diag-gaussian"):
            raise ConfigError(f"phi {self.phi!r} does not match the dimension of {fam}")

        if est == "slice" and fam != "gaussian":
            raise ConfigError("slice needs a gaussian base")
        if est == "go" and not self.dist.discrete:
            raise ConfigError("go needs a discrete distribution")
        if self.dist.discrete and est not in ("lr", "lr-baseline", "lr-optimal-baseline", "go", "oracle"):
            raise ConfigError(f"{est} is not available for discrete distributions")
        if est == "lr-antithetic" and fam not in ("gaussian", "diag-gaussian"):
            raise ConfigError("lr-antithetic needs a gaussian")
        if est.startswith("boxes") and fam not in ("gaussian", "uniform"):
            raise ConfigError(f"{est} needs a continuous 1-D distribution")
        if est == "flow" and self.flow == "cdf" and fam == "diag-gaussian":
            raise ConfigError("the cdf flow is 1-D only")
        if fam == "uniform":
            # the score ignores the moving edges, so any LR share is biased
            pathwise = est in ("rp", "oracle", "boxes-rp") or (est == "flow" and self.flow != "zero" and self.k == 1.0)
            if not pathwise:
                raise ConfigError(f"{self.label} misses the moving-boundary term of a uniform density")
        if self.q_sigma is not None:
            if fam != "gaussian" or est not in ("lr", "flow"):
                raise ConfigError("q-sigma applies to lr or flow on a gaussian")
            if self.q_sigma <= 0:
                raise ConfigError("q-sigma must be positive")
        if self.n_boxes < 10:
            raise ConfigError("n-boxes must be at least 10")
        if self.dtheta <= 0:
            raise ConfigError("dtheta must be positive")
        return self

    def q_dist(self) -> Optional[Distribution]:
        if self.q_sigma is None:
            return None
        return Gaussian1D(self.dist.mu, self.q_sigma)


_DIST_KEYS = {f.name for f in fields(DistSpec)} | {"dist"}
_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"dist"}
_INT_KEYS = {"n", "reps", "seed", "ymax", "dim", "n_boxes"}
_BOOL_KEYS = {"jump_correction"}
_STR_KEYS = {"estimator", "phi", "flow", "dist"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _STR_KEYS:
            return raw
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key in _INT_KEYS:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def config_from_mapping(values: dict, where: str = "config") -> RunConfig:
    """Build a validated :class:`RunConfig` from flat ``key -> str`` pairs."""
    dist_kw, run_kw = {}, {}
    for key, raw in values.items():
        k = key.strip().replace("-", "_")
        if k not in _DIST_KEYS | _RUN_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        v = _coerce(k, raw) if isinstance(raw, str) else raw
        if k == "dist":
            dist_kw["family"] = v
        elif k in _DIST_KEYS:
            dist_kw[k] = v
        else:
            run_kw[k] = v
    if "estimator" not in run_kw:
        raise ConfigError(f"{where}: missing estimator")
    try:
        cfg = RunConfig(dist=DistSpec(**dist_kw), **run_kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> list[tuple[str, RunConfig]]:
    """Parse a sweep file into ``(section, RunConfig)`` pairs in file order."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    runs = [(name, config_from_mapping(dict(parser[name]), where=f"[{name}]")) for name in parser.sections()]
    if not runs:
        raise ConfigError(f"{path}: no [section] found")
    return runs


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **kw).validate()
