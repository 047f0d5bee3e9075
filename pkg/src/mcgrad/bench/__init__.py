"""Benchmark layer: test-function registry, run configs, reports and the CLI."""

from .config import DistSpec, RunConfig, load_config
from .registry import get_phi, phi_registry
from .report import HEADER, BenchmarkReport, ReportRow
from .run import run_estimate, run_sweep

__all__ = [
    "HEADER",
    "BenchmarkReport",
    "DistSpec",
    "ReportRow",
    "RunConfig",
    "get_phi",
    "load_config",
    "phi_registry",
    "run_estimate",
    "run_sweep",
]
