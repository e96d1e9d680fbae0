"""Experiment orchestration: metrics, multi-seed runs, reports and the CLI."""

from agsf.harness.config import ExperimentConfig, load_config
from agsf.harness.experiment import ResultRecord, run_experiment
from agsf.harness.metrics import lpe, mse
from agsf.harness.report import emit_report, load_report

__all__ = [
    "ExperimentConfig",
    "ResultRecord",
    "emit_report",
    "load_config",
    "load_report",
    "lpe",
    "mse",
    "run_experiment",
]
