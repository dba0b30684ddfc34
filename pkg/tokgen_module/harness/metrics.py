"""
Reconstruction metrics and the per-step metrics record

Images are numpy arrays (H, W) or (H, W, C); torch images (C, H, W) or
(B, C, H, W) go through ``to_hwc`` first.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np
import torch
from numpy.lib.stride_tricks import sliding_window_view
from torch import Tensor

from tokgen_module.core.errors import DomainError

ArrayLike = Union[np.ndarray, Tensor]


def to_hwc(image: Tensor) -> np.ndarray:
    """(C, H, W) tensor -> (H, W, C) float64 array."""
    if image.ndim != 3:
        raise DomainError(f"expected a (C, H, W) image, got {tuple(image.shape)}")
    return image.detach().cpu().to(torch.float64).permute(1, 2, 0).numpy()


def _as_array(image: ArrayLike) -> np.ndarray:
    if isinstance(image, Tensor):
        return to_hwc(image) if image.ndim == 3 else image.detach().cpu().double().numpy()
    return np.asarray(image, dtype=np.float64)


def _pair(a: ArrayLike, b: ArrayLike):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: ArrayLike, b: ArrayLike, max_value: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio in dB.

    Returns:
        ``math.inf`` when the images are identical
    """
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: int, c1: float, c2: float) -> float:
    wx = sliding_window_view(x, (window, window))
    wy = sliding_window_view(y, (window, window))
    mx = wx.mean(axis=(-1, -2))
    my = wy.mean(axis=(-1, -2))
    vx = (wx ** 2).mean(axis=(-1, -2)) - mx ** 2
    vy = (wy ** 2).mean(axis=(-1, -2)) - my ** 2
    cov = (wx * wy).mean(axis=(-1, -2)) - mx * my
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx ** 2 + my ** 2 + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(
    a: ArrayLike,
    b: ArrayLike,
    window: int = 7,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> float:
    """
    Structural similarity with a uniform square window.

    Statistics are population moments over every stride-1 window that
    fits inside the image; multi-channel images average per-channel SSIM.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise DomainError(f"expected (H, W) or (H, W, C) images, got {a.shape}")
    if window < 1 or window > min(a.shape[0], a.shape[1]):
        raise DomainError(f"window {window} does not fit a {a.shape[0]}x{a.shape[1]} image")
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    return float(np.mean([
        _ssim_channel(a[..., c], b[..., c], window, c1, c2) for c in range(a.shape[2])
    ]))


def batch_metrics(originals: Tensor, reconstructions: Tensor, window: int = 7) -> Dict[str, float]:
    """Mean PSNR/SSIM over a (B, 3, H, W) batch; infinite PSNRs are capped at 100 dB."""
    if originals.shape != reconstructions.shape:
        raise DomainError("batch shape mismatch")
    window = min(window, originals.shape[-1], originals.shape[-2])
    psnrs, ssims = [], []
    for x, y in zip(originals, reconstructions):
        psnrs.append(min(psnr(x, y), 100.0))
        ssims.append(ssim(x, y, window=window))
    return {"psnr": float(np.mean(psnrs)), "ssim": float(np.mean(ssims))}


@dataclass
class MetricsRecord:
    """One line of a run's metrics file."""

    step: int
    stage: str = ""
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    sem_cosine: Optional[float] = None
    utilization: Dict[str, float] = field(default_factory=dict)
    losses: Dict[str, float] = field(default_factory=dict)
    extra: Dict[str, object] = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        if self.ssim is not None and not -1.0 <= self.ssim <= 1.0 + 1e-9:
            raise DomainError(f"ssim must lie in [-1, 1], got {self.ssim}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsRecord":
        data = dict(data)
        if data.get("psnr") == "inf":
            data["psnr"] = math.inf
        return cls(**data)


def mean_of(records: Sequence[MetricsRecord], name: str) -> Optional[float]:
    values = [getattr(r, name) for r in records if getattr(r, name) is not None]
    return float(np.mean(values)) if values else None
