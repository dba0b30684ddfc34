"""
Telemetry - structured run logging, metrics files and monitors

Example:
    from tokgen_module.telemetry import RunLoggerBuilder, InMemoryMonitor

    monitor = InMemoryMonitor()
    logger = (RunLoggerBuilder()
        .with_console()
        .with_metrics_file("runs/demo/metrics.jsonl")
        .with_monitor(monitor)
        .build())
"""

from tokgen_module.telemetry.filters import LevelFilter
from tokgen_module.telemetry.formatters import (
    BaseFormatter,
    CompactFormatter,
    JSONFormatter,
)
from tokgen_module.telemetry.log_entry import LogEntry
from tokgen_module.telemetry.log_level import LogLevel
from tokgen_module.telemetry.metrics import TrainingMetrics, TrainingMetricsCollector
from tokgen_module.telemetry.monitor import InMemoryMonitor, Monitor, NullMonitor
from tokgen_module.telemetry.run_logger import RunLogger, RunLoggerBuilder, get_logger
from tokgen_module.telemetry.writers import ConsoleWriter, FileWriter, MetricsWriter

__all__ = [
    "LogLevel",
    "LogEntry",
    "BaseFormatter",
    "JSONFormatter",
    "CompactFormatter",
    "ConsoleWriter",
    "FileWriter",
    "MetricsWriter",
    "LevelFilter",
    "Monitor",
    "NullMonitor",
    "InMemoryMonitor",
    "TrainingMetrics",
    "TrainingMetricsCollector",
    "RunLogger",
    "RunLoggerBuilder",
    "get_logger",
]
