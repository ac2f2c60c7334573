"""Experiment harness: phantoms, noise, file formats, orchestration."""

from .config import ExperimentConfig, echo_config, make_config, parse_config_text
from .experiment import grid_search, history_csv, run_experiment, sweep
from .io import read_raw_field, write_pgm, write_raw_field
from .phantoms import KINDS, add_relative_noise, make_phantom

__all__ = [
    "ExperimentConfig",
    "KINDS",
    "add_relative_noise",
    "echo_config",
    "grid_search",
    "history_csv",
    "make_config",
    "make_phantom",
    "parse_config_text",
    "read_raw_field",
    "run_experiment",
    "sweep",
    "write_pgm",
    "write_raw_field",
]
