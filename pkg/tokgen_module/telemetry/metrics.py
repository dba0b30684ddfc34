"""
Training metrics aggregation

Collects per-step loss components and timing for a training loop and
exposes a snapshot for progress logging.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional


@dataclass(frozen=True)
class TrainingMetrics:
    """Immutable view of a collector's state."""

    steps: int = 0
    divergences: int = 0
    steps_per_second: float = 0.0
    last_losses: Dict[str, float] = field(default_factory=dict)
    mean_losses: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "steps": self.steps,
            "divergences": self.divergences,
            "steps_per_second": self.steps_per_second,
            "last_losses": dict(self.last_losses),
            "mean_losses": dict(self.mean_losses),
        }


class TrainingMetricsCollector:
    """
    Running loss statistics over a sliding window of steps.

    Args:
        window: Number of most recent steps averaged in mean_losses
    """

    def __init__(self, window: int = 50):
        if window <= 0:
            raise ValueError("window must be positive")
        self._window = window
        self._lock = threading.Lock()
        self._history: Dict[str, List[float]] = {}
        self._last: Dict[str, float] = {}
        self._steps = 0
        self._divergences = 0
        self._started = time.perf_counter()
        self._step_times: List[float] = []

    def record_step(self, losses: Mapping[str, float]) -> None:
        """Record the loss components of one completed step."""
        now = time.perf_counter()
        with self._lock:
            self._steps += 1
            for name, value in losses.items():
                value = float(value)
                self._last[name] = value
                hist = self._history.setdefault(name, [])
                hist.append(value)
                if len(hist) > self._window:
                    del hist[: len(hist) - self._window]
            self._step_times.append(now)
            if len(self._step_times) > self._window:
                del self._step_times[: len(self._step_times) - self._window]

    def record_divergence(self) -> None:
        with self._lock:
            self._divergences += 1

    def mean(self, name: str) -> Optional[float]:
        with self._lock:
            hist = self._history.get(name)
            if not hist:
                return None
            return sum(hist) / len(hist)

    def snapshot(self) -> TrainingMetrics:
        with self._lock:
            rate = 0.0
            if len(self._step_times) >= 2:
                span = self._step_times[-1] - self._step_times[0]
                if span > 0:
                    rate = (len(self._step_times) - 1) / span
            return TrainingMetrics(
                steps=self._steps,
                divergences=self._divergences,
                steps_per_second=rate,
                last_losses=dict(self._last),
                mean_losses={
                    k: sum(v) / len(v) for k, v in self._history.items() if v
                },
            )

    def reset(self) -> None:
        with self._lock:
            self._history.clear()
            self._last.clear()
            self._steps = 0
            self._divergences = 0
            self._step_times.clear()
            self._started = time.perf_counter()
