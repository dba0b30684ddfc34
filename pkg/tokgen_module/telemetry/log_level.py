"""
Log level enumeration for run logging

Values line up with the standard logging module so levels can be
passed through to third-party handlers unchanged.
"""

from enum import IntEnum


class LogLevel(IntEnum):
    """Severity of a run log entry."""

    TRACE = 5       # per-token sampling detail
    DEBUG = 10      # per-step loss components
    INFO = 20       # stage progress, evaluation results
    WARN = 30       # degenerate inputs, skipped work
    ERROR = 40      # aborted steps, failed stages
    CRITICAL = 50
    OFF = 100

    def __str__(self) -> str:
        return self.name

    @property
    def abbrev(self) -> str:
        """Three letter code used by the compact console format."""
        return {
            LogLevel.TRACE: "TRC",
            LogLevel.DEBUG: "DBG",
            LogLevel.INFO: "INF",
            LogLevel.WARN: "WRN",
            LogLevel.ERROR: "ERR",
            LogLevel.CRITICAL: "CRT",
        }.get(self, self.name[:3])

    @classmethod
    def from_string(cls, level_str: str) -> "LogLevel":
        """
        Convert a config string to a LogLevel.

        Args:
            level_str: Level name, case-insensitive ("warning" is accepted for WARN)

        Returns:
            LogLevel enum value

        Raises:
            ValueError: If level_str is not a known level
        """
        name = level_str.strip().upper()
        if name == "WARNING":
            name = "WARN"
        if name in cls.__members__:
            return cls[name]
        raise ValueError(f"Invalid log level: {level_str}")
