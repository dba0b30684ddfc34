"""
Paired semantic / pixel token grids for one image
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from tokgen_module.core.errors import DomainError
from tokgen_module.seqcodec.layout import VocabLayout


def _as_grid(values: Any, name: str) -> np.ndarray:
    if hasattr(values, "detach"):
        values = values.detach().cpu().numpy()
    grid = np.asarray(values, dtype=np.int64)
    if grid.ndim != 2:
        raise DomainError(f"{name} must be a 2-D grid, got shape {grid.shape}")
    return grid


@dataclass(eq=False)
class ImageTokenBlock:
    """
    Semantic grid (sem_h x sem_w) and pixel grid (pix_h x pix_w) of code
    indices, local to their codebooks.
    """

    sem_indices: np.ndarray
    pix_indices: np.ndarray

    def __post_init__(self):
        self.sem_indices = _as_grid(self.sem_indices, "sem_indices")
        self.pix_indices = _as_grid(self.pix_indices, "pix_indices")

    @property
    def sem_h(self) -> int:
        return int(self.sem_indices.shape[0])

    @property
    def sem_w(self) -> int:
        return int(self.sem_indices.shape[1])

    @property
    def pix_h(self) -> int:
        return int(self.pix_indices.shape[0])

    @property
    def pix_w(self) -> int:
        return int(self.pix_indices.shape[1])

    def validate(self, layout: VocabLayout) -> None:
        """
        Raises:
            DomainError: If dims break the pixel ratio or exceed the
                indicator range, or an index is outside its codebook
        """
        if not (1 <= self.sem_h <= layout.max_height and 1 <= self.sem_w <= layout.max_width):
            raise DomainError(
                f"semantic grid {self.sem_h}x{self.sem_w} exceeds "
                f"{layout.max_height}x{layout.max_width}"
            )
        if layout.pixel_dims(self.sem_h, self.sem_w) != (self.pix_h, self.pix_w):
            raise DomainError(
                f"pixel grid {self.pix_h}x{self.pix_w} inconsistent with semantic "
                f"{self.sem_h}x{self.sem_w} at ratio {layout.pixel_ratio}"
            )
        for name, grid, size in (
            ("semantic", self.sem_indices, layout.sem_codebook_size),
            ("pixel", self.pix_indices, layout.pix_codebook_size),
        ):
            if grid.size and (grid.min() < 0 or grid.max() >= size):
                raise DomainError(f"{name} index out of range [0, {size})")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageTokenBlock):
            return NotImplemented
        return np.array_equal(self.sem_indices, other.sem_indices) and np.array_equal(
            self.pix_indices, other.pix_indices
        )

    def __repr__(self) -> str:
        return (
            f"ImageTokenBlock(sem={self.sem_h}x{self.sem_w}, pix={self.pix_h}x{self.pix_w})"
        )
