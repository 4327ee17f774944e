"""Experiment harness: configuration, execution, persistence, data profiles and CLI."""

from sketchopt.harness.config import ConfigError, ExperimentConfig, ProblemEntry, SolverEntry, config_from_dict, load_config
from sketchopt.harness.persistence import SCHEMA_VERSION, PersistenceError, load_runs, read_trace, write_trace
from sketchopt.harness.profiles import DataProfile, ProfileRun, compute_profiles, emit_plot_data, n_p
from sketchopt.harness.runner import RunSet, run_experiment

__all__ = [
    "SCHEMA_VERSION", "ConfigError", "DataProfile", "ExperimentConfig", "PersistenceError",
    "ProblemEntry", "ProfileRun", "RunSet", "SolverEntry", "compute_profiles", "config_from_dict",
    "emit_plot_data", "load_config", "load_runs", "n_p", "read_trace", "run_experiment",
    "write_trace",
]
