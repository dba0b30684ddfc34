"""
Run logger and its builder

RunLogger is a synchronous structured logger: training code runs in a
single writer thread, so entries are written in the caller's thread and
never reordered.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Any, List, Optional, Union

from tokgen_module.telemetry.filters import LevelFilter
from tokgen_module.telemetry.formatters import CompactFormatter, JSONFormatter
from tokgen_module.telemetry.log_entry import LogEntry
from tokgen_module.telemetry.log_level import LogLevel
from tokgen_module.telemetry.monitor import Monitor, NullMonitor
from tokgen_module.telemetry.writers import ConsoleWriter, FileWriter, MetricsWriter


class RunLogger:
    """
    Structured logger for training and evaluation runs.

    Example:
        logger = (RunLoggerBuilder()
            .with_name("tok")
            .with_console()
            .with_metrics_file("runs/a/metrics.jsonl")
            .build())
        stage_log = logger.bind(stage="tok-1")
        stage_log.info("step done", step=10, loss=0.42)
        logger.log_metrics(record)
    """

    def __init__(
        self,
        name: str = "tokgen",
        min_level: LogLevel = LogLevel.INFO,
        monitor: Optional[Monitor] = None,
    ):
        self.name = name
        self.min_level = min_level
        self.monitor: Monitor = monitor or NullMonitor()
        self._writers: List[Any] = []
        self._metrics_writers: List[MetricsWriter] = []
        self._filters: List[Any] = []
        self._stage: Optional[str] = None
        self._counts = {"logged": 0, "records": 0}
        self._lock = threading.Lock()

    def add_writer(self, writer: Any) -> None:
        self._writers.append(writer)

    def add_metrics_writer(self, writer: MetricsWriter) -> None:
        self._metrics_writers.append(writer)

    def add_filter(self, entry_filter: Any) -> None:
        self._filters.append(entry_filter)

    def bind(self, stage: Optional[str] = None) -> "RunLogger":
        """
        Child logger sharing writers and monitor, tagging entries with a stage.
        """
        child = RunLogger(self.name, self.min_level, self.monitor)
        child._writers = self._writers
        child._metrics_writers = self._metrics_writers
        child._filters = self._filters
        child._counts = self._counts
        child._lock = self._lock
        child._stage = stage if stage is not None else self._stage
        return child

    @property
    def stage(self) -> Optional[str]:
        return self._stage

    def log(
        self, level: LogLevel, message: str, step: Optional[int] = None, **fields
    ) -> None:
        if level < self.min_level:
            return
        entry = LogEntry(
            level=level,
            message=message,
            logger_name=self.name,
            stage=self._stage,
            step=step,
            fields=fields,
        )
        for f in self._filters:
            if not f(entry):
                return
        with self._lock:
            for writer in self._writers:
                try:
                    writer.write(entry)
                except Exception:
                    self.monitor.record_counter("log_writer_errors")
            self._counts["logged"] += 1

    def trace(self, message: str, step: Optional[int] = None, **fields) -> None:
        self.log(LogLevel.TRACE, message, step, **fields)

    def debug(self, message: str, step: Optional[int] = None, **fields) -> None:
        self.log(LogLevel.DEBUG, message, step, **fields)

    def info(self, message: str, step: Optional[int] = None, **fields) -> None:
        self.log(LogLevel.INFO, message, step, **fields)

    def warn(self, message: str, step: Optional[int] = None, **fields) -> None:
        self.log(LogLevel.WARN, message, step, **fields)

    def error(self, message: str, step: Optional[int] = None, **fields) -> None:
        self.log(LogLevel.ERROR, message, step, **fields)

    def log_metrics(self, record: Any) -> None:
        """Append a metrics record to every metrics file."""
        with self._lock:
            for writer in self._metrics_writers:
                writer.write_record(record)
            self._counts["records"] += 1

    def get_counts(self) -> dict:
        return dict(self._counts)

    def flush(self) -> None:
        for writer in self._writers + self._metrics_writers:
            if hasattr(writer, "flush"):
                writer.flush()

    def close(self) -> None:
        for writer in self._writers + self._metrics_writers:
            if hasattr(writer, "close"):
                writer.close()


class RunLoggerBuilder:
    """Fluent construction of a RunLogger."""

    def __init__(self):
        self._name = "tokgen"
        self._level = LogLevel.INFO
        self._console = False
        self._console_stream = None
        self._file_path: Optional[Path] = None
        self._metrics_path: Optional[Path] = None
        self._monitor: Optional[Monitor] = None
        self._writers: List[Any] = []
        self._filters: List[Any] = []

    def with_name(self, name: str) -> "RunLoggerBuilder":
        self._name = name
        return self

    def with_level(self, level: Union[LogLevel, str]) -> "RunLoggerBuilder":
        self._level = LogLevel.from_string(level) if isinstance(level, str) else level
        return self

    def with_console(self, stream=None) -> "RunLoggerBuilder":
        self._console = True
        self._console_stream = stream
        return self

    def with_file(self, filepath: Union[str, Path]) -> "RunLoggerBuilder":
        """JSON-lines log file (all entries at or above the logger level)."""
        self._file_path = Path(filepath)
        return self

    def with_metrics_file(self, filepath: Union[str, Path]) -> "RunLoggerBuilder":
        self._metrics_path = Path(filepath)
        return self

    def with_monitor(self, monitor: Monitor) -> "RunLoggerBuilder":
        self._monitor = monitor
        return self

    def with_writer(self, writer: Any) -> "RunLoggerBuilder":
        self._writers.append(writer)
        return self

    def with_filter(self, entry_filter: Any) -> "RunLoggerBuilder":
        self._filters.append(entry_filter)
        return self

    def build(self) -> RunLogger:
        logger = RunLogger(self._name, self._level, self._monitor)
        if self._console:
            logger.add_writer(
                ConsoleWriter(stream=self._console_stream, formatter=CompactFormatter())
            )
        if self._file_path is not None:
            logger.add_writer(FileWriter(self._file_path, formatter=JSONFormatter()))
        for writer in self._writers:
            logger.add_writer(writer)
        if self._metrics_path is not None:
            logger.add_metrics_writer(MetricsWriter(self._metrics_path))
        for f in self._filters:
            logger.add_filter(f)
        return logger


_default_logger: Optional[RunLogger] = None
_default_lock = threading.Lock()


def get_logger() -> RunLogger:
    """Process-wide fallback logger: console, WARN and above."""
    global _default_logger
    with _default_lock:
        if _default_logger is None:
            _default_logger = (
                RunLoggerBuilder()
                .with_name("tokgen")
                .with_level(LogLevel.WARN)
                .with_console()
                .with_filter(LevelFilter(LogLevel.WARN))
                .build()
            )
        return _default_logger
