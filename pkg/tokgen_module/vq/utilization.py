"""
Codebook utilization accounting
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Union

import torch
from torch import Tensor

from tokgen_module.core.errors import DomainError
from tokgen_module.vq.quantizer import QuantizeResult


@dataclass(frozen=True)
class UtilizationReport:
    """Usage histogram over K codes and the fraction of codes ever used."""

    histogram: Tensor
    utilization: float

    @property
    def positions(self) -> int:
        return int(self.histogram.sum().item())

    @property
    def used_codes(self) -> int:
        return int((self.histogram > 0).sum().item())

    def to_dict(self) -> dict:
        return {
            "utilization": self.utilization,
            "used_codes": self.used_codes,
            "positions": self.positions,
            "codebook_size": int(self.histogram.numel()),
        }


def _indices_of(item: Union[QuantizeResult, Tensor]) -> Tensor:
    return item.indices if isinstance(item, QuantizeResult) else torch.as_tensor(item)


def _histogram(indices: Tensor, size: int) -> Tensor:
    flat = indices.detach().reshape(-1).to(torch.long).cpu()
    if flat.numel() == 0:
        return torch.zeros(size, dtype=torch.long)
    low, high = int(flat.min()), int(flat.max())
    if low < 0 or high >= size:
        bad = low if low < 0 else high
        raise DomainError(f"code index {bad} out of range [0, {size})")
    return torch.bincount(flat, minlength=size)


def utilization(
    results: Iterable[Union[QuantizeResult, Tensor]], size: int
) -> UtilizationReport:
    """
    Count code usage over a stream of quantization results.

    Args:
        results: QuantizeResult objects or raw index tensors
        size: Codebook size K

    Raises:
        DomainError: If any index lies outside [0, K)
    """
    if size <= 0:
        raise DomainError(f"codebook size must be positive, got {size}")
    hist = torch.zeros(size, dtype=torch.long)
    for item in results:
        hist += _histogram(_indices_of(item), size)
    used = int((hist > 0).sum().item())
    return UtilizationReport(histogram=hist, utilization=used / size)


class UtilizationTracker:
    """
    Streaming utilization histogram, safe to update from several threads.

    Example:
        tracker = UtilizationTracker(1024)
        for batch in loader:
            tracker.update(tokenizer.encode(batch).sem_indices)
        print(tracker.report().utilization)
    """

    def __init__(self, size: int):
        if size <= 0:
            raise DomainError(f"codebook size must be positive, got {size}")
        self.size = size
        self._hist = torch.zeros(size, dtype=torch.long)
        self._lock = threading.Lock()

    def update(self, item: Union[QuantizeResult, Tensor]) -> None:
        counts = _histogram(_indices_of(item), self.size)
        with self._lock:
            self._hist += counts

    def report(self) -> UtilizationReport:
        with self._lock:
            hist = self._hist.clone()
        used = int((hist > 0).sum().item())
        return UtilizationReport(histogram=hist, utilization=used / self.size)

    def reset(self) -> None:
        with self._lock:
            self._hist.zero_()
