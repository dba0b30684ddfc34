"""Core - exception hierarchy and strict config conversion"""

from tokgen_module.core.config_loader import from_mapping, replace, to_mapping
from tokgen_module.core.errors import (
    CheckpointMismatchError,
    ConfigError,
    DivergenceError,
    DomainError,
    ParseError,
    ParseErrorKind,
    StageError,
    TokgenError,
)

__all__ = [
    "from_mapping",
    "replace",
    "to_mapping",
    "CheckpointMismatchError",
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "ParseError",
    "ParseErrorKind",
    "StageError",
    "TokgenError",
]
