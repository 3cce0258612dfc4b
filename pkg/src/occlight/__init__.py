"""Occupancy-driven lighting control: binary-sensor tracking and power-minimizing switching."""
from .config import ConfigError, default_office, load, parse_config
from .harness import Scenario, compute_metrics, run_controllers, run_scenario

__all__ = [
    "ConfigError",
    "Scenario",
    "compute_metrics",
    "default_office",
    "load",
    "parse_config",
    "run_controllers",
    "run_scenario",
]
__version__ = "0.1.0"
