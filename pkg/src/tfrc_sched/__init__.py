"""TFRC-aware downlink scheduling: offline MILP heuristics, online policies, sweeps."""

from .model import Algorithm, ConfigError, Request, RunMetrics, SimConfig, validate_config

__all__ = ["Algorithm", "ConfigError", "Request", "RunMetrics", "SimConfig", "validate_config"]
__version__ = "0.1.0"
