"""Configuration Management Package"""

from .settings import (
    AttackBudget,
    OTConfig,
    Settings,
    config_hash,
    load_config,
)

__all__ = [
    "AttackBudget",
    "OTConfig",
    "Settings",
    "config_hash",
    "load_config",
]
