"""Scenario runs, orientation analysis and the command-line interface."""

from .experiments import (
    ConfigError,
    HarnessError,
    OrientationRow,
    OrientationTable,
    ReportRow,
    ReportTable,
    RunConfig,
    bin_edges,
    error_vs_orientation,
    evaluation_scenes,
    load_estimator,
    orientation_bin,
    reaggregate,
    read_report,
    run_scenario,
)
from .cli import main
