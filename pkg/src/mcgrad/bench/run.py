"""Execute a :class:`RunConfig` and fill a :class:`BenchmarkReport`."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import McgradError
from ..estimators import EstimatorSpec, _threads, batch_estimate
from ..oracle import boxes_lr_gradient, boxes_rp_gradient, oracle_gradient, variance_report
from .config import RunConfig
from .report import BenchmarkReport, ReportRow


def _spec(cfg: RunConfig) -> EstimatorSpec:
    return EstimatorSpec(
        cfg.estimator, flow=cfg.flow, k=cfg.k, q=cfg.q_dist(), jump_correction=cfg.jump_correction
    )


def run_estimate(cfg: RunConfig, threads: int | None = None) -> BenchmarkReport:
    """Run one configuration; the oracle column always comes from quadrature or brute force."""
    cfg.validate()
    dist = cfg.dist.build()
    phi = cfg.phi_function()
    try:
        oracle = np.asarray(oracle_gradient(dist, phi), dtype=float)
        n, reps = cfg.n, cfg.reps
        if cfg.estimator == "oracle":
            mean, var = oracle, np.zeros_like(oracle)
            se = var
        elif cfg.estimator in ("boxes-lr", "boxes-rp"):
            fn = boxes_lr_gradient if cfg.estimator == "boxes-lr" else boxes_rp_gradient
            mean = np.asarray(fn(dist, phi, cfg.n_boxes, cfg.dtheta), dtype=float)
            var = se = np.zeros_like(mean)
            n = cfg.n_boxes
        elif reps > 1:
            rep = variance_report(_spec(cfg), dist, phi, n, reps, cfg.seed, threads=threads)
            mean, var, se = rep.mean, rep.variance, rep.std_error
        else:
            est = batch_estimate(_spec(cfg), dist, phi, n, cfg.seed, threads=threads)
            mean, var, se = est.mean, est.variance, est.std_error
    except McgradError as exc:
        raise type(exc)(f"{cfg.label} on {dist!r} with {cfg.phi}: {exc}") from exc

    rows = [
        ReportRow(cfg.label, name, float(mean[i]), float(var[i]), float(se[i]), n, reps, cfg.seed, float(oracle[i]))
        for i, name in enumerate(dist.params.names)
    ]
    return BenchmarkReport(rows)


def run_sweep(configs: list[RunConfig], threads: int | None = None) -> BenchmarkReport:
    """Run several configurations; output keeps declaration order whatever the worker count."""
    workers = min(_threads(threads), max(1, len(configs)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: run_estimate(c, threads=1), configs))
    else:
        parts = [run_estimate(c, threads=threads) for c in configs]
    out = BenchmarkReport()
    for p in parts:
        out.extend(p)
    return out
