"""Cooperative interference draining for small cells underlaying a macrocell."""

from .config import ConfigError, ScenarioConfig, Strategy

__version__ = "0.1.0"

__all__ = ["ConfigError", "ScenarioConfig", "Strategy", "__version__"]
