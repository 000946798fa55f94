"""Experiment harness: configuration, orchestration, result files and CLI."""

from .config import REFERENCE_OCCUPIED_SET, ExperimentConfig
from .experiments import (
    OperatingPoint,
    RunReport,
    optimize_dither,
    run_dither_optimization,
    run_monte_carlo,
    run_psd,
    run_sweep,
)
from .io import emit_results, validate_report

__all__ = [
    "ExperimentConfig", "REFERENCE_OCCUPIED_SET", "OperatingPoint", "RunReport", "run_monte_carlo",
    "run_sweep", "optimize_dither", "run_dither_optimization", "run_psd", "emit_results",
    "validate_report",
]
