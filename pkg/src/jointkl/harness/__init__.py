"""Experiment grids, result CSVs, normalized reports and reproductions."""

from jointkl.harness.config import ConfigError, ExperimentConfig, Metric, load_config, parse_config
from jointkl.harness.report import NormalizedReport, ReportError, make_report
from jointkl.harness.repro import REPRO_IDS, Check, repro
from jointkl.harness.runner import ResultRow, read_results, run_experiment

__all__ = [
    "Check",
    "ConfigError",
    "ExperimentConfig",
    "Metric",
    "NormalizedReport",
    "REPRO_IDS",
    "ReportError",
    "ResultRow",
    "load_config",
    "make_report",
    "parse_config",
    "read_results",
    "repro",
    "run_experiment",
]
