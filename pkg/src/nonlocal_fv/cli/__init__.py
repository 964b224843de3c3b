"""Config-driven experiment runner."""
from .config import RunConfig, dump_config, load_config, parse_config
from .experiments import RunOptions, run_experiment

__all__ = ["RunConfig", "RunOptions", "dump_config", "load_config", "parse_config", "run_experiment"]
