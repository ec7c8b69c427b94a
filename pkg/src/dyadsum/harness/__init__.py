"""Experiment driver: configs, random suites, measured-constant reports and the CLI."""

from .config import RunConfig, build_config, load_config
from .reports import ExperimentReport

__all__ = ["RunConfig", "build_config", "load_config", "ExperimentReport"]
