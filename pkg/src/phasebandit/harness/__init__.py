"""Experiment runner, CSV/SVG output and the command line interface."""

from .config import ConfigError, ExperimentConfig
from .output import CsvParseError, emit_csv, emit_plot, format_csv, parse_csv, render_svg
from .runner import (
    CellSummary,
    RegretSummary,
    RunRecord,
    fit_summary,
    run_experiment,
    run_single,
    sweep_and_fit,
)

__all__ = [
    "CellSummary",
    "ConfigError",
    "CsvParseError",
    "ExperimentConfig",
    "RegretSummary",
    "RunRecord",
    "emit_csv",
    "emit_plot",
    "fit_summary",
    "format_csv",
    "parse_csv",
    "render_svg",
    "run_experiment",
    "run_single",
    "sweep_and_fit",
]
