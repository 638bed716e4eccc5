"""Command-line runner for the experiments."""

from .commands import COMMANDS, derive_seed
from .config import ConfigError, RunConfig, load_config, parse_config
from .main import build_parser, main
from .stats import pearson_r

__all__ = ["COMMANDS", "ConfigError", "RunConfig", "build_parser", "derive_seed", "load_config", "main",
           "parse_config", "pearson_r"]
