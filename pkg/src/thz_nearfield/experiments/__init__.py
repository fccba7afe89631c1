"""Reproducible experiment presets and their file outputs."""
from .config import ConfigError, ExperimentConfig, default_config, load_config, validate_config
from .presets import list_experiments
from .runner import RunResult, compute, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "compute", "default_config", "list_experiments",
           "load_config", "run_experiment", "validate_config"]
