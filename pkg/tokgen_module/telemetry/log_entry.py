"""
Run log entry

A LogEntry carries the message plus the training context it was emitted
in (stage and step) and any structured fields such as loss values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Optional

from tokgen_module.telemetry.log_level import LogLevel


@dataclass
class LogEntry:
    """Single log event emitted by a RunLogger."""

    level: LogLevel
    message: str
    timestamp: datetime = field(default_factory=datetime.now)
    logger_name: str = ""
    stage: Optional[str] = None
    step: Optional[int] = None
    fields: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.level, LogLevel):
            raise TypeError("level must be LogLevel enum")
        if not isinstance(self.message, str):
            self.message = str(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Dictionary form used by the JSON formatter."""
        data: Dict[str, Any] = {
            "timestamp": self.timestamp.isoformat(),
            "level": self.level.name,
            "message": self.message,
        }
        if self.logger_name:
            data["logger"] = self.logger_name
        if self.stage is not None:
            data["stage"] = self.stage
        if self.step is not None:
            data["step"] = self.step
        if self.fields:
            data["fields"] = dict(self.fields)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LogEntry":
        """Rebuild an entry from its JSON form."""
        return cls(
            level=LogLevel[data["level"]],
            message=data["message"],
            timestamp=datetime.fromisoformat(data["timestamp"]),
            logger_name=data.get("logger", ""),
            stage=data.get("stage"),
            step=data.get("step"),
            fields=data.get("fields", {}),
        )
