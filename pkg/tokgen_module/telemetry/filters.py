"""Entry filters"""

from tokgen_module.telemetry.log_entry import LogEntry
from tokgen_module.telemetry.log_level import LogLevel


class LevelFilter:
    """Keep entries at or above min_level."""

    def __init__(self, min_level: LogLevel = LogLevel.INFO):
        self.min_level = min_level

    def should_log(self, entry: LogEntry) -> bool:
        return entry.level >= self.min_level

    def __call__(self, entry: LogEntry) -> bool:
        return self.should_log(entry)

    def __repr__(self) -> str:
        return f"LevelFilter(min_level={self.min_level.name})"
