"""
Unified token-id space

Ids are laid out contiguously in this order:

    text [0, T) | 7 markers | height indicators 1..H_max |
    width indicators 1..W_max | semantic codes [O_s, O_s + K_s) |
    pixel codes [O_p, O_p + K_p)

so V = T + 7 + H_max + W_max + K_s + K_p.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from typing import NamedTuple, Tuple

from tokgen_module.core.errors import DomainError

MARKER_COUNT = 7


class Marker(IntEnum):
    """Structural markers, in id order."""

    SOI = 0
    EOI = 1
    SOS = 2
    EOS = 3
    SOP = 4
    EOP = 5
    EOL = 6


class TokenKind(str, Enum):
    TEXT = "text"
    MARKER = "marker"
    HEIGHT = "height"
    WIDTH = "width"
    SEMANTIC = "semantic"
    PIXEL = "pixel"


class LocalToken(NamedTuple):
    """A global id resolved to its range and the value inside that range."""

    kind: TokenKind
    value: int


@dataclass(frozen=True)
class VocabLayout:
    """
    Offsets of every id range in the unified vocabulary.

    Height and width indicators count semantic-grid rows and columns; the
    pixel grid is derived through ``pixel_ratio`` (f_s / f_p).
    """

    text_vocab_size: int
    sem_codebook_size: int
    pix_codebook_size: int
    max_height: int
    max_width: int
    pixel_ratio: Fraction = field(default=Fraction(2))
    id_bits: int = 32

    def __post_init__(self):
        object.__setattr__(self, "pixel_ratio", Fraction(self.pixel_ratio))
        if self.text_vocab_size < 0:
            raise DomainError("text_vocab_size must be non-negative")
        for name in ("sem_codebook_size", "pix_codebook_size", "max_height", "max_width"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.pixel_ratio <= 0:
            raise DomainError("pixel_ratio must be positive")
        if not 1 <= self.id_bits <= 64:
            raise DomainError("id_bits must be in [1, 64]")
        if self.vocab_size > 1 << self.id_bits:
            raise DomainError(
                f"vocabulary of {self.vocab_size} ids overflows {self.id_bits}-bit ids"
            )

    # -- offsets ------------------------------------------------------

    @property
    def marker_offset(self) -> int:
        return self.text_vocab_size

    @property
    def height_offset(self) -> int:
        return self.marker_offset + MARKER_COUNT

    @property
    def width_offset(self) -> int:
        return self.height_offset + self.max_height

    @property
    def sem_offset(self) -> int:
        return self.width_offset + self.max_width

    @property
    def pix_offset(self) -> int:
        return self.sem_offset + self.sem_codebook_size

    @property
    def vocab_size(self) -> int:
        return self.pix_offset + self.pix_codebook_size

    def marker(self, marker: Marker) -> int:
        return self.marker_offset + int(marker)

    @property
    def soi(self) -> int:
        return self.marker(Marker.SOI)

    @property
    def eoi(self) -> int:
        return self.marker(Marker.EOI)

    @property
    def sos(self) -> int:
        return self.marker(Marker.SOS)

    @property
    def eos(self) -> int:
        return self.marker(Marker.EOS)

    @property
    def sop(self) -> int:
        return self.marker(Marker.SOP)

    @property
    def eop(self) -> int:
        return self.marker(Marker.EOP)

    @property
    def eol(self) -> int:
        return self.marker(Marker.EOL)

    def height_id(self, height: int) -> int:
        if not 1 <= height <= self.max_height:
            raise DomainError(f"height {height} outside 1..{self.max_height}")
        return self.height_offset + height - 1

    def width_id(self, width: int) -> int:
        if not 1 <= width <= self.max_width:
            raise DomainError(f"width {width} outside 1..{self.max_width}")
        return self.width_offset + width - 1

    def range_of(self, kind: TokenKind) -> Tuple[int, int]:
        """Half-open id interval of a kind."""
        return {
            TokenKind.TEXT: (0, self.marker_offset),
            TokenKind.MARKER: (self.marker_offset, self.height_offset),
            TokenKind.HEIGHT: (self.height_offset, self.width_offset),
            TokenKind.WIDTH: (self.width_offset, self.sem_offset),
            TokenKind.SEMANTIC: (self.sem_offset, self.pix_offset),
            TokenKind.PIXEL: (self.pix_offset, self.vocab_size),
        }[TokenKind(kind)]

    # -- global <-> local ---------------------------------------------

    def from_global(self, token_id: int) -> LocalToken:
        """
        Resolve a global id. Height/width values are 1-based sizes,
        marker values are Marker members, code values are code indices.

        Raises:
            DomainError: If the id is outside [0, V)
        """
        token_id = int(token_id)
        if not 0 <= token_id < self.vocab_size:
            raise DomainError(f"token id {token_id} outside [0, {self.vocab_size})")
        if token_id < self.marker_offset:
            return LocalToken(TokenKind.TEXT, token_id)
        if token_id < self.height_offset:
            return LocalToken(TokenKind.MARKER, Marker(token_id - self.marker_offset))
        if token_id < self.width_offset:
            return LocalToken(TokenKind.HEIGHT, token_id - self.height_offset + 1)
        if token_id < self.sem_offset:
            return LocalToken(TokenKind.WIDTH, token_id - self.width_offset + 1)
        if token_id < self.pix_offset:
            return LocalToken(TokenKind.SEMANTIC, token_id - self.sem_offset)
        return LocalToken(TokenKind.PIXEL, token_id - self.pix_offset)

    def to_global(self, kind: TokenKind, value: int) -> int:
        """Inverse of from_global."""
        kind = TokenKind(kind)
        if kind is TokenKind.HEIGHT:
            return self.height_id(value)
        if kind is TokenKind.WIDTH:
            return self.width_id(value)
        if kind is TokenKind.MARKER:
            return self.marker(Marker(value))
        lo, hi = self.range_of(kind)
        if not 0 <= value < hi - lo:
            raise DomainError(f"{kind.value} value {value} outside [0, {hi - lo})")
        return lo + int(value)

    # -- grid geometry ------------------------------------------------

    def pixel_dims(self, sem_h: int, sem_w: int) -> Tuple[int, int]:
        """Pixel grid dims for a semantic grid; raises if not integral."""
        ph, pw = sem_h * self.pixel_ratio, sem_w * self.pixel_ratio
        if ph.denominator != 1 or pw.denominator != 1:
            raise DomainError(
                f"semantic grid {sem_h}x{sem_w} has no integral pixel grid at ratio {self.pixel_ratio}"
            )
        return int(ph), int(pw)

    def valid_side(self, n: int) -> bool:
        return (n * self.pixel_ratio).denominator == 1

    def sequence_length(self, sem_h: int, sem_w: int) -> int:
        """Serialized length of one image block."""
        ph, pw = self.pixel_dims(sem_h, sem_w)
        return 8 + sem_h * (sem_w + 1) + ph * (pw + 1)

    def to_dict(self) -> dict:
        return {
            "text_vocab_size": self.text_vocab_size,
            "sem_codebook_size": self.sem_codebook_size,
            "pix_codebook_size": self.pix_codebook_size,
            "max_height": self.max_height,
            "max_width": self.max_width,
            "pixel_ratio": str(self.pixel_ratio),
            "id_bits": self.id_bits,
        }

    def layout_hash(self) -> int:
        """u32 fingerprint stored in token-stream files."""
        canonical = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return int.from_bytes(hashlib.sha256(canonical).digest()[:4], "little")


def layout_build(
    T: int,
    K_s: int,
    K_p: int,
    H_max: int,
    W_max: int,
    pixel_ratio: Fraction = Fraction(2),
    id_bits: int = 32,
) -> VocabLayout:
    """
    Build the contiguous layout.

    Raises:
        DomainError: On non-positive sizes or if V overflows ``id_bits``
    """
    return VocabLayout(T, K_s, K_p, H_max, W_max, pixel_ratio=pixel_ratio, id_bits=id_bits)
