"""
Aspect-ratio matching and the crop-integrity rule

Ratios are width:height. The closest ratio minimises |ln((W/H) / r)|;
comparisons use the exact rational max(x/r, r/x), which orders ratios the
same way without floating-point ties.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Tuple

from tokgen_module.core.errors import DomainError

ASPECT_RATIOS: Tuple[Fraction, ...] = (
    Fraction(1, 1),
    Fraction(3, 4),
    Fraction(4, 3),
    Fraction(2, 3),
    Fraction(3, 2),
    Fraction(1, 2),
    Fraction(2, 1),
    Fraction(1, 3),
    Fraction(3, 1),
    Fraction(1, 4),
    Fraction(4, 1),
)

KEEP_THRESHOLD = Fraction(4, 5)


def ratio_label(ratio: Fraction) -> str:
    return f"{ratio.numerator}:{ratio.denominator}"


@dataclass(frozen=True)
class CropPlan:
    """
    Chosen ratio and the centred crop box (x, y, w, h) in source pixels.

    retained = (w * h) / (W * H), exact.
    """

    ratio: Fraction
    box: Tuple[int, int, int, int]
    source: Tuple[int, int]
    retained: Fraction

    @property
    def crop_size(self) -> Tuple[int, int]:
        """(w, h) of the crop."""
        return self.box[2], self.box[3]

    def to_dict(self) -> dict:
        return {
            "ratio": ratio_label(self.ratio),
            "box": list(self.box),
            "retained": float(self.retained),
        }


def _distance(x: Fraction, r: Fraction) -> Fraction:
    q = x / r
    return q if q >= 1 else 1 / q


def closest_ratio(width: int, height: int, ratios: Sequence[Fraction] = ASPECT_RATIOS) -> Fraction:
    x = Fraction(width, height)
    best = ratios[0]
    best_d = _distance(x, best)
    for r in ratios[1:]:
        d = _distance(x, r)
        if d < best_d:
            best, best_d = r, d
    return best


def match_ratio(width: int, height: int, ratios: Sequence[Fraction] = ASPECT_RATIOS) -> CropPlan:
    """
    Closest predefined ratio and the largest centred crop of exactly it.

    Ties go to the earlier ratio in ``ratios``.
    """
    if width < 1 or height < 1:
        raise DomainError(f"image dims must be >= 1, got {width}x{height}")
    if not ratios:
        raise DomainError("ratio set is empty")
    ratio = closest_ratio(width, height, ratios)
    p, q = ratio.numerator, ratio.denominator
    k = max(1, min(width // p, height // q))
    crop_w, crop_h = min(p * k, width), min(q * k, height)
    x0 = (width - crop_w) // 2
    y0 = (height - crop_h) // 2
    return CropPlan(
        ratio=ratio,
        box=(x0, y0, crop_w, crop_h),
        source=(width, height),
        retained=Fraction(crop_w * crop_h, width * height),
    )


def integrity_filter(plan: CropPlan) -> bool:
    """Keep iff the crop retains at least 80% of the image."""
    return plan.retained >= KEEP_THRESHOLD
