"""
Formatters turning run log entries into text lines
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from typing import Any

from tokgen_module.telemetry.log_entry import LogEntry


def _json_safe(value: Any) -> Any:
    """Map values json cannot encode (inf, nan, tensors) to portable forms."""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        try:
            return _json_safe(value.item())
        except (TypeError, ValueError):
            return str(value)
    return value


class BaseFormatter(ABC):
    """Formatter interface."""

    @abstractmethod
    def format(self, entry: LogEntry) -> str:
        """Render one entry as a single line (no trailing newline)."""


class JSONFormatter(BaseFormatter):
    """
    One JSON object per line.

    Infinite PSNR values and other non-finite floats are written as the
    strings "inf"/"nan" so the output stays strict JSON.
    """

    def __init__(self, sort_keys: bool = False):
        self.sort_keys = sort_keys

    def format(self, entry: LogEntry) -> str:
        return json.dumps(_json_safe(entry.to_dict()), sort_keys=self.sort_keys)

    def format_record(self, record: Any) -> str:
        """Render any object exposing to_dict() (metrics records, manifest rows)."""
        return json.dumps(_json_safe(record.to_dict()), sort_keys=self.sort_keys)

    def __repr__(self) -> str:
        return f"JSONFormatter(sort_keys={self.sort_keys})"


class CompactFormatter(BaseFormatter):
    """
    Console format: ``12:34:56 INF [tok-1@200] message loss=0.1234``.
    """

    def __init__(self, include_timestamp: bool = True, float_digits: int = 4):
        self.include_timestamp = include_timestamp
        self.float_digits = float_digits

    def _render(self, value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.{self.float_digits}g}"
        return str(value)

    def format(self, entry: LogEntry) -> str:
        parts = []
        if self.include_timestamp:
            parts.append(entry.timestamp.strftime("%H:%M:%S"))
        parts.append(entry.level.abbrev)
        if entry.stage is not None or entry.step is not None:
            ctx = entry.stage or ""
            if entry.step is not None:
                ctx = f"{ctx}@{entry.step}"
            parts.append(f"[{ctx}]")
        parts.append(entry.message)
        for key, value in entry.fields.items():
            parts.append(f"{key}={self._render(value)}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"CompactFormatter(timestamp={self.include_timestamp})"
