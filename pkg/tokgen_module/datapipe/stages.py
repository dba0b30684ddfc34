"""
Progressive training stages and their resolution policy
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from tokgen_module.core.errors import ConfigError
from tokgen_module.datapipe.ratios import match_ratio


class ResolutionMode(str, Enum):
    FIXED = "fixed"
    ANYRES = "anyres"


@dataclass(frozen=True)
class StagePlan:
    """
    Resolution mode, pixel budget and trainable groups of one stage.

    fixed: every image becomes main_size x main_size (rounded down to the
    divisor). anyres: the matched aspect ratio scaled to the largest area
    <= main_size ** 2 with the longer side <= max_size and both sides
    multiples of ``divisor``.
    """

    stage_id: str
    mode: ResolutionMode
    main_size: int
    max_size: Optional[int] = None
    divisor: int = 8
    trainable: Tuple[str, ...] = ()
    tasks: Tuple[str, ...] = ()
    learning_rates: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mode", ResolutionMode(self.mode))
        if self.main_size <= 0 or self.divisor <= 0:
            raise ConfigError(f"stage {self.stage_id}: budgets must be positive")
        if self.max_size is not None and self.max_size <= 0:
            raise ConfigError(f"stage {self.stage_id}: max_size must be positive")

    @property
    def square_size(self) -> int:
        return max(self.divisor, self.main_size // self.divisor * self.divisor)


def _unit(divisor: int, p: int, q: int) -> int:
    a = divisor // math.gcd(divisor, q)
    b = divisor // math.gcd(divisor, p)
    return a * b // math.gcd(a, b)


def stage_resolution(stage: StagePlan, width: int, height: int) -> Tuple[int, int]:
    """
    Target (H', W') for an image of width x height under a stage plan.

    Both returned sides are multiples of ``stage.divisor``. When even the
    smallest admissible size breaks the budget, the smallest size is used.
    """
    if stage.mode is ResolutionMode.FIXED:
        side = stage.square_size
        return side, side
    ratio = match_ratio(width, height).ratio
    p, q = ratio.numerator, ratio.denominator
    unit = _unit(stage.divisor, p, q)
    n = math.isqrt(stage.main_size ** 2 // (p * q)) // unit
    if stage.max_size is not None:
        n = min(n, stage.max_size // (max(p, q) * unit))
    t = unit * max(n, 1)
    return q * t, p * t


_TOKENIZER_GROUPS = ("codebooks", "pixel_encoder", "pixel_decoder", "semantic_decoder")
_LM_TASKS = ("text", "caption", "text_to_image", "edit")


def stage_plans(preset: str = "desk") -> Dict[str, StagePlan]:
    """
    Stage schedule of the whole system.

    ``reference`` uses the reference resolutions (fixed sizes rounded down to
    the 112-pixel multiple of the reference tokenizer) and learning rates;
    ``desk`` divides resolutions by 8 and raises rates for short runs.
    """
    if preset == "reference":
        scale, divisor, diff_divisor = 1, 112, 224
        rates = {
            "tok": {"tokenizer": 1e-4},
            "diffusion": {"unet": 2e-5},
            "lm-1": {"adapter": 1e-3, "vocab": 2e-4},
            "lm-2": {"adapter": 5e-5, "vocab": 5e-5, "body": 5e-5},
            "lm-3": {"adapter": 2e-5, "vocab": 2e-5, "body": 2e-5},
        }
    elif preset == "desk":
        scale, divisor, diff_divisor = 8, 8, 16
        rates = {
            "tok": {"tokenizer": 4e-4},
            "diffusion": {"unet": 2e-4},
            "lm-1": {"adapter": 5e-3, "vocab": 1e-3},
            "lm-2": {"adapter": 2.5e-4, "vocab": 2.5e-4, "body": 2.5e-4},
            "lm-3": {"adapter": 1e-4, "vocab": 1e-4, "body": 1e-4},
        }
    else:
        raise ConfigError(f"unknown stage preset {preset!r}")

    def size(pixels: int) -> int:
        return pixels // scale

    fixed, anyres = ResolutionMode.FIXED, ResolutionMode.ANYRES
    plans = [
        StagePlan("tok-1", fixed, size(256), divisor=divisor, trainable=_TOKENIZER_GROUPS,
                  tasks=("reconstruction",), learning_rates=rates["tok"]),
        StagePlan("tok-2", fixed, size(512), divisor=divisor, trainable=_TOKENIZER_GROUPS,
                  tasks=("reconstruction",), learning_rates=rates["tok"]),
        StagePlan("tok-3", anyres, size(512), size(512), divisor=divisor,
                  trainable=_TOKENIZER_GROUPS, tasks=("reconstruction",),
                  learning_rates=rates["tok"]),
        StagePlan("diffusion", anyres, size(512), size(1024), divisor=diff_divisor,
                  trainable=("unet",), tasks=("reconstruction",),
                  learning_rates=rates["diffusion"]),
        StagePlan("lm-1", fixed, size(256), divisor=divisor,
                  trainable=("adapter", "vision_rows"),
                  tasks=("reconstruction", "caption"), learning_rates=rates["lm-1"]),
        StagePlan("lm-2-1", fixed, size(256), divisor=divisor,
                  trainable=("adapter", "vocab", "body"), tasks=_LM_TASKS,
                  learning_rates=rates["lm-2"]),
        StagePlan("lm-2-2", fixed, size(512), divisor=divisor,
                  trainable=("adapter", "vocab", "body"), tasks=_LM_TASKS,
                  learning_rates=rates["lm-2"]),
        StagePlan("lm-3", anyres, size(512), size(1024), divisor=divisor,
                  trainable=("adapter", "vocab", "body"), tasks=_LM_TASKS,
                  learning_rates=rates["lm-3"]),
    ]
    return {plan.stage_id: plan for plan in plans}


STAGE_ORDER = ("tok-1", "tok-2", "tok-3", "diffusion", "lm-1", "lm-2-1", "lm-2-2", "lm-3")

STAGE_PREREQUISITES: Dict[str, Tuple[str, ...]] = {
    "tok-1": (),
    "tok-2": ("tok-1",),
    "tok-3": ("tok-2",),
    "diffusion": ("tok-3",),
    "lm-1": ("tok-3",),
    "lm-2-1": ("lm-1",),
    "lm-2-2": ("lm-2-1",),
    "lm-3": ("lm-2-2",),
}
