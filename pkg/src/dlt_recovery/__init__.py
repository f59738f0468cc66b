"""Stake-weighted hashgraph consensus among UTFM-driven airline recovery agents."""

from .errors import (
    ConfigurationError,
    DomainError,
    InvalidEventError,
    OrphanEventError,
    RecoveryError,
    ScenarioError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "InvalidEventError",
    "OrphanEventError",
    "RecoveryError",
    "ScenarioError",
    "__version__",
]
