"""Continual learning with gradient projection over full-rank and LoRA parameters."""

from gorp.errors import (
    DataError,
    GorpError,
    InvariantError,
    NumericInputError,
    ParseError,
    ShapeError,
    SpecError,
    UsageError,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "GorpError",
    "InvariantError",
    "NumericInputError",
    "ParseError",
    "ShapeError",
    "SpecError",
    "UsageError",
]
