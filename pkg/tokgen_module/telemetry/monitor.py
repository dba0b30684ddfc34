"""
Monitor protocol for counters, gauges and histograms

Library code reports degenerate conditions (zero-norm vectors, rejected
token sequences, diverged steps) through a Monitor so tests and the
harness can inspect them without parsing log text.
"""

from __future__ import annotations

import threading
from typing import Dict, List, Optional, Protocol, runtime_checkable


@runtime_checkable
class Monitor(Protocol):
    """Metric sink interface."""

    def record_counter(
        self, name: str, value: int = 1, tags: Optional[Dict[str, str]] = None
    ) -> None:
        ...

    def record_gauge(
        self, name: str, value: float, tags: Optional[Dict[str, str]] = None
    ) -> None:
        ...

    def record_histogram(
        self, name: str, value: float, tags: Optional[Dict[str, str]] = None
    ) -> None:
        ...


class NullMonitor:
    """Discards everything."""

    def record_counter(self, name, value=1, tags=None) -> None:
        pass

    def record_gauge(self, name, value, tags=None) -> None:
        pass

    def record_histogram(self, name, value, tags=None) -> None:
        pass


class InMemoryMonitor:
    """
    Keeps every metric in memory.

    Thread-safe; data-loading workers may report concurrently with the
    training loop.
    """

    def __init__(self):
        self._counters: Dict[str, int] = {}
        self._gauges: Dict[str, float] = {}
        self._histograms: Dict[str, List[float]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _make_key(name: str, tags: Optional[Dict[str, str]]) -> str:
        if tags:
            tag_str = ",".join(f"{k}={v}" for k, v in sorted(tags.items()))
            return f"{name}{{{tag_str}}}"
        return name

    def record_counter(self, name, value=1, tags=None) -> None:
        key = self._make_key(name, tags)
        with self._lock:
            self._counters[key] = self._counters.get(key, 0) + int(value)

    def record_gauge(self, name, value, tags=None) -> None:
        key = self._make_key(name, tags)
        with self._lock:
            self._gauges[key] = float(value)

    def record_histogram(self, name, value, tags=None) -> None:
        key = self._make_key(name, tags)
        with self._lock:
            self._histograms.setdefault(key, []).append(float(value))

    def get_counter(self, name: str, tags: Optional[Dict[str, str]] = None) -> int:
        return self._counters.get(self._make_key(name, tags), 0)

    def get_gauge(self, name: str, tags: Optional[Dict[str, str]] = None) -> float:
        return self._gauges.get(self._make_key(name, tags), 0.0)

    def get_histogram(
        self, name: str, tags: Optional[Dict[str, str]] = None
    ) -> List[float]:
        return list(self._histograms.get(self._make_key(name, tags), []))

    def reset(self) -> None:
        with self._lock:
            self._counters.clear()
            self._gauges.clear()
            self._histograms.clear()

    def to_dict(self) -> Dict[str, Dict]:
        """Snapshot of every metric, keyed by name{tags}."""
        with self._lock:
            return {
                "counters": dict(self._counters),
                "gauges": dict(self._gauges),
                "histograms": {k: list(v) for k, v in self._histograms.items()},
            }
