"""
Exception hierarchy for the token generation stack

Every "domain error" raised by an operation is a DomainError, which is also a
ValueError so that callers treating bad arguments generically keep working.
"""

from __future__ import annotations

from enum import Enum
from typing import Optional


class TokgenError(Exception):
    """Root of all errors raised by tokgen_module."""


class DomainError(TokgenError, ValueError):
    """An operation was called outside its precondition."""


class ConfigError(DomainError):
    """Invalid or unknown configuration value."""


class ParseErrorKind(Enum):
    """Distinct reasons a token sequence is rejected by the image grammar."""

    UNEXPECTED_TOKEN = "unexpected_token"
    OUT_OF_RANGE = "out_of_range"
    MISSING_EOL = "missing_eol"
    ROW_LENGTH_MISMATCH = "row_length_mismatch"
    ROW_COUNT_MISMATCH = "row_count_mismatch"
    PIXEL_GRID_INCONSISTENT = "pixel_grid_inconsistent"
    TRUNCATED = "truncated"
    TRAILING_TOKENS = "trailing_tokens"
    BAD_STREAM_HEADER = "bad_stream_header"


class ParseError(DomainError):
    """
    Structured rejection of a token sequence.

    Attributes:
        kind: Category of the violation
        position: Index of the first offending token (or byte offset for stream files)
        detail: Human readable description
    """

    def __init__(self, kind: ParseErrorKind, position: int, detail: str):
        self.kind = kind
        self.position = position
        self.detail = detail
        super().__init__(f"{kind.value} at position {position}: {detail}")


class DivergenceError(TokgenError, RuntimeError):
    """A training step produced a non-finite loss; no update was applied."""

    def __init__(self, step: int, component: Optional[str] = None):
        self.step = step
        self.component = component
        where = f" in {component}" if component else ""
        super().__init__(f"non-finite loss{where} at step {step}, step aborted")


class StageError(TokgenError):
    """A training stage cannot run, usually because a prerequisite is missing."""

    def __init__(self, stage: str, reason: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {reason}")


class CheckpointMismatchError(TokgenError):
    """Checkpoint was written under a structurally different configuration."""

    def __init__(self, path: str, expected: str, found: str):
        self.path = path
        self.expected = expected
        self.found = found
        super().__init__(
            f"checkpoint {path} has config hash {found[:12]}, "
            f"current config is {expected[:12]}; pass allow_mismatch to override"
        )
