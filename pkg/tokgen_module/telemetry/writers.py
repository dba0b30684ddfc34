"""
Writers for run logs and metrics streams

ConsoleWriter and FileWriter receive LogEntry objects; MetricsWriter
receives MetricsRecord-like objects (anything with to_dict()) and keeps the
append-only newline-delimited metrics file of a run.
"""

from __future__ import annotations

import sys
import threading
from pathlib import Path
from typing import Any, Optional, TextIO, Union

from tokgen_module.telemetry.formatters import (
    BaseFormatter,
    CompactFormatter,
    JSONFormatter,
)
from tokgen_module.telemetry.log_entry import LogEntry


class ConsoleWriter:
    """Write entries to a text stream (stderr by default)."""

    def __init__(
        self,
        stream: Optional[TextIO] = None,
        formatter: Optional[BaseFormatter] = None,
        entry_filter: Any = None,
    ):
        self.stream = stream or sys.stderr
        self.formatter = formatter or CompactFormatter()
        self.entry_filter = entry_filter

    def write(self, entry: LogEntry) -> None:
        if self.entry_filter is not None and not self.entry_filter(entry):
            return
        self.stream.write(self.formatter.format(entry) + "\n")

    def flush(self) -> None:
        self.stream.flush()


class FileWriter:
    """Append entries to a file, one line each."""

    def __init__(
        self,
        filepath: Union[str, Path],
        formatter: Optional[BaseFormatter] = None,
        encoding: str = "utf-8",
        entry_filter: Any = None,
    ):
        self.filepath = Path(filepath)
        self.formatter = formatter or JSONFormatter()
        self.encoding = encoding
        self.entry_filter = entry_filter
        self._lock = threading.Lock()
        self.filepath.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.filepath, "a", encoding=encoding)

    def write(self, entry: LogEntry) -> None:
        if self.entry_filter is not None and not self.entry_filter(entry):
            return
        with self._lock:
            if self._file:
                self._file.write(self.formatter.format(entry) + "\n")

    def flush(self) -> None:
        with self._lock:
            if self._file:
                self._file.flush()

    def close(self) -> None:
        with self._lock:
            if self._file:
                self._file.close()
                self._file = None


class MetricsWriter:
    """
    Append-only newline-delimited metrics file.

    Records are never rewritten; each call to write_record appends one
    JSON line and flushes so a crashed run keeps every completed record.
    """

    def __init__(self, filepath: Union[str, Path], encoding: str = "utf-8"):
        self.filepath = Path(filepath)
        self._formatter = JSONFormatter(sort_keys=True)
        self._lock = threading.Lock()
        self.records_written = 0
        self.filepath.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.filepath, "a", encoding=encoding)

    def write_record(self, record: Any) -> None:
        line = self._formatter.format_record(record)
        with self._lock:
            if self._file:
                self._file.write(line + "\n")
                self._file.flush()
                self.records_written += 1

    def flush(self) -> None:
        with self._lock:
            if self._file:
                self._file.flush()

    def close(self) -> None:
        with self._lock:
            if self._file:
                self._file.close()
                self._file = None
