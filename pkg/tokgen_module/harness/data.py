"""
Toy datasets

SyntheticShapes draws one coloured shape on a plain background and
captions it; EditTriples pairs such images with an editing instruction
and the edited result; ImageFolderDataset reads real images with Pillow
under the aspect-ratio crop rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from PIL import Image
from torch import Tensor
from torch.utils.data import Dataset

from tokgen_module.core.errors import DomainError
from tokgen_module.datapipe.manifest import iter_images
from tokgen_module.datapipe.ratios import integrity_filter, match_ratio
from tokgen_module.datapipe.stages import StagePlan, stage_resolution

COLORS: Dict[str, Tuple[float, float, float]] = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.2),
    "blue": (0.1, 0.2, 0.9),
    "yellow": (0.95, 0.9, 0.1),
    "white": (0.95, 0.95, 0.95),
    "black": (0.05, 0.05, 0.05),
}
SHAPES = ("circle", "square", "triangle")

EDIT_OPERATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "invert colors": lambda x: 1.0 - x,
    "flip horizontal": lambda x: x.flip(-1),
    "swap red and blue": lambda x: x[[2, 1, 0]],
}


def _size(size: Union[int, Tuple[int, int]]) -> Tuple[int, int]:
    return (size, size) if isinstance(size, int) else (int(size[0]), int(size[1]))


def draw_shape(
    shape: str,
    color: str,
    background: str,
    height: int,
    width: int,
    rng: np.random.Generator,
) -> Tensor:
    """(3, H, W) float image with one shape at a random position and scale."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    side = min(height, width)
    radius = rng.uniform(0.2, 0.35) * side
    cy = rng.uniform(radius, height - radius)
    cx = rng.uniform(radius, width - radius)
    if shape == "circle":
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    elif shape == "square":
        mask = (np.abs(yy - cy) <= radius) & (np.abs(xx - cx) <= radius)
    elif shape == "triangle":
        top = cy - radius
        rel = (yy - top) / (2 * radius)
        mask = (rel >= 0) & (rel <= 1) & (np.abs(xx - cx) <= rel * radius)
    else:
        raise DomainError(f"unknown shape {shape!r}")
    image = np.empty((3, height, width), dtype=np.float32)
    for c in range(3):
        image[c] = np.where(mask, COLORS[color][c], COLORS[background][c])
    return torch.from_numpy(image)


@dataclass
class ShapeSample:
    image: Tensor
    caption: str
    shape: str
    color: str
    background: str


class SyntheticShapes(Dataset):
    """
    Deterministic captioned shape images.

    Example:
        data = SyntheticShapes(64, size=32, seed=0)
        sample = data[0]      # sample.image (3, 32, 32), sample.caption
    """

    def __init__(self, count: int, size: Union[int, Tuple[int, int]] = 32, seed: int = 0):
        if count < 1:
            raise DomainError("count must be >= 1")
        self.count = count
        self.height, self.width = _size(size)
        self.seed = seed

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> ShapeSample:
        if not 0 <= index < self.count:
            raise IndexError(index)
        rng = np.random.default_rng([self.seed, index])
        names = list(COLORS)
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        color = names[int(rng.integers(len(names)))]
        background = names[int(rng.integers(len(names) - 1))]
        if background == color:
            background = names[-1]
        image = draw_shape(shape, color, background, self.height, self.width, rng)
        caption = f"a {color} {shape} on a {background} background"
        return ShapeSample(image, caption, shape, color, background)

    def images(self, indices: Optional[Sequence[int]] = None) -> Tensor:
        indices = range(self.count) if indices is None else indices
        return torch.stack([self[i].image for i in indices])


@dataclass
class EditTriple:
    source: Tensor
    instruction: str
    target: Tensor


class EditTriples(Dataset):
    """
    (source, instruction, edited target) triples over SyntheticShapes.

    With ``instruction`` set every triple uses it; otherwise the known
    instructions are cycled.
    """

    def __init__(
        self,
        count: int,
        size: Union[int, Tuple[int, int]] = 32,
        instruction: Optional[str] = None,
        seed: int = 0,
    ):
        if instruction is not None and instruction not in EDIT_OPERATIONS:
            known = ", ".join(EDIT_OPERATIONS)
            raise DomainError(f"unknown instruction {instruction!r}; known: {known}")
        self.shapes = SyntheticShapes(count, size, seed)
        self.instruction = instruction

    def __len__(self) -> int:
        return len(self.shapes)

    def __getitem__(self, index: int) -> EditTriple:
        source = self.shapes[index].image
        names = list(EDIT_OPERATIONS)
        instruction = self.instruction or names[index % len(names)]
        return EditTriple(source, instruction, EDIT_OPERATIONS[instruction](source).contiguous())


def load_image(path: Union[str, Path]) -> Tensor:
    """RGB image file -> (3, H, W) float tensor in [0, 1]."""
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DomainError(f"cannot read image {path}: {exc}") from exc
    return torch.from_numpy(array).permute(2, 0, 1).contiguous()


def save_image(image: Tensor, path: Union[str, Path]) -> Path:
    """(3, H, W) tensor in [0, 1] -> PNG (or any Pillow format by suffix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    array = (image.detach().cpu().clamp(0, 1) * 255.0).round().to(torch.uint8)
    Image.fromarray(array.permute(1, 2, 0).numpy()).save(path)
    return path


def fit_image(image: Tensor, height: int, width: int) -> Tensor:
    """Centre-crop to the closest aspect ratio, then resize to (height, width)."""
    plan = match_ratio(image.shape[2], image.shape[1])
    x0, y0, w, h = plan.box
    crop = image[:, y0:y0 + h, x0:x0 + w]
    resized = torch.nn.functional.interpolate(
        crop.unsqueeze(0), size=(height, width), mode="bilinear",
        antialias=True, align_corners=False,
    )
    return resized[0].clamp(0, 1)


class ImageFolderDataset(Dataset):
    """
    Images under a folder, cropped by the aspect-ratio rule.

    Images whose crop keeps less than 80% of the area are dropped. The
    target size is ``size`` when given, else the stage's resolution
    policy.
    """

    def __init__(
        self,
        root: Union[str, Path],
        stage: Optional[StagePlan] = None,
        size: Optional[Tuple[int, int]] = None,
    ):
        if stage is None and size is None:
            raise DomainError("either a stage plan or a fixed size is required")
        self.root = Path(root)
        self.stage = stage
        self.size = size
        self.paths: List[Path] = []
        self._resolutions: List[Tuple[int, int]] = []
        self.dropped = 0
        for path in iter_images(self.root):
            try:
                with Image.open(path) as img:
                    width, height = img.size
            except OSError:
                self.dropped += 1
                continue
            if not integrity_filter(match_ratio(width, height)):
                self.dropped += 1
                continue
            self.paths.append(path)
            self._resolutions.append(size or stage_resolution(stage, width, height))

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def resolutions(self) -> List[Tuple[int, int]]:
        return list(self._resolutions)

    def __getitem__(self, index: int) -> Tensor:
        height, width = self._resolutions[index]
        return fit_image(load_image(self.paths[index]), height, width)
