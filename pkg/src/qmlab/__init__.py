"""Quenched mixing lab: Monte Carlo experiments on random dynamical systems."""
from .environment import Environment, ParameterLaw
from .errors import (
    ArgumentError,
    ConfigError,
    DepthTruncationWarning,
    DomainError,
    InsufficientSignalError,
    RangeError,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ConfigError",
    "DepthTruncationWarning",
    "DomainError",
    "Environment",
    "InsufficientSignalError",
    "ParameterLaw",
    "RangeError",
]
