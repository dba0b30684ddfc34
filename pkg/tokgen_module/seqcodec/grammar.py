"""
Coarse-to-fine image grammar

    <soi> H(sem_h) W(sem_w) <sos> (sem_code{sem_w} <eol>){sem_h} <eos>
    <sop> (pix_code{pix_w} <eol>){pix_h} <eop> <eoi>

serialize emits it, parse validates it strictly, and GrammarState walks it
one token at a time to produce legality masks for constrained decoding.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from tokgen_module.core.errors import DomainError, ParseError, ParseErrorKind
from tokgen_module.seqcodec.block import ImageTokenBlock
from tokgen_module.seqcodec.layout import TokenKind, VocabLayout
from tokgen_module.telemetry.monitor import Monitor


def serialize(block: ImageTokenBlock, layout: VocabLayout) -> List[int]:
    """
    Token ids of one image block.

    Raises:
        DomainError: If the block violates the layout (dims or code range)
    """
    block.validate(layout)
    tokens = [layout.soi, layout.height_id(block.sem_h), layout.width_id(block.sem_w), layout.sos]
    for row in (block.sem_indices + layout.sem_offset).tolist():
        tokens.extend(row)
        tokens.append(layout.eol)
    tokens += [layout.eos, layout.sop]
    for row in (block.pix_indices + layout.pix_offset).tolist():
        tokens.extend(row)
        tokens.append(layout.eol)
    tokens += [layout.eop, layout.eoi]
    return tokens


class _Parser:
    def __init__(self, tokens: Sequence[int], layout: VocabLayout):
        self.tokens = [int(t) for t in tokens]
        self.layout = layout
        self.pos = 0

    def _fail(self, kind: ParseErrorKind, detail: str, position: Optional[int] = None) -> ParseError:
        return ParseError(kind, self.pos if position is None else position, detail)

    def _bad_token(self, token: int, expected: str) -> ParseError:
        if not 0 <= token < self.layout.vocab_size:
            return self._fail(ParseErrorKind.OUT_OF_RANGE, f"id {token} outside vocabulary")
        kind = self.layout.from_global(token).kind
        if kind in (TokenKind.SEMANTIC, TokenKind.PIXEL) and expected.endswith("code"):
            return self._fail(ParseErrorKind.OUT_OF_RANGE, f"{kind.value} code where {expected} expected")
        return self._fail(ParseErrorKind.UNEXPECTED_TOKEN, f"id {token} where {expected} expected")

    def _next(self, expected: str) -> int:
        if self.pos >= len(self.tokens):
            raise self._fail(ParseErrorKind.TRUNCATED, f"stream ended where {expected} expected")
        return self.tokens[self.pos]

    def _expect(self, marker_id: int, name: str) -> None:
        token = self._next(name)
        if token != marker_id:
            raise self._bad_token(token, name)
        self.pos += 1

    def _indicator(self, kind: TokenKind) -> int:
        token = self._next(f"{kind.value} indicator")
        lo, hi = self.layout.range_of(kind)
        if not lo <= token < hi:
            raise self._bad_token(token, f"{kind.value} indicator")
        self.pos += 1
        return token - lo + 1

    def _rows(self, kind: TokenKind, end_id: int, end_name: str) -> Tuple[List[List[int]], List[int]]:
        """Rows of local code values and the position each row ended at."""
        lo, hi = self.layout.range_of(kind)
        rows: List[List[int]] = []
        ends: List[int] = []
        current: List[int] = []
        expected = f"{kind.value} code"
        while True:
            token = self._next(f"{expected}, <eol> or {end_name}")
            if lo <= token < hi:
                current.append(token - lo)
            elif token == self.layout.eol:
                rows.append(current)
                ends.append(self.pos)
                current = []
            elif token == end_id:
                if current:
                    raise self._fail(
                        ParseErrorKind.MISSING_EOL, f"row {len(rows)} not terminated by <eol>"
                    )
                self.pos += 1
                return rows, ends
            else:
                raise self._bad_token(token, expected)
            self.pos += 1

    def parse(self) -> ImageTokenBlock:
        layout = self.layout
        self._expect(layout.soi, "<start_of_image>")
        sem_h = self._indicator(TokenKind.HEIGHT)
        sem_w = self._indicator(TokenKind.WIDTH)
        self._expect(layout.sos, "<start_of_semantic>")

        sem_rows, sem_ends = self._rows(TokenKind.SEMANTIC, layout.eos, "<end_of_semantic>")
        for r, (row, end) in enumerate(zip(sem_rows, sem_ends)):
            if len(row) != sem_w:
                raise self._fail(
                    ParseErrorKind.ROW_LENGTH_MISMATCH,
                    f"row length mismatch at row {r}: {len(row)} != {sem_w}",
                    end,
                )
        if len(sem_rows) != sem_h:
            raise self._fail(
                ParseErrorKind.ROW_COUNT_MISMATCH,
                f"{len(sem_rows)} semantic rows, height indicator says {sem_h}",
                self.pos - 1,
            )

        self._expect(layout.sop, "<start_of_pixel>")
        pix_start = self.pos
        pix_rows, pix_ends = self._rows(TokenKind.PIXEL, layout.eop, "<end_of_pixel>")
        if not layout.valid_side(sem_h) or not layout.valid_side(sem_w):
            raise self._fail(
                ParseErrorKind.PIXEL_GRID_INCONSISTENT,
                f"semantic grid {sem_h}x{sem_w} has no pixel grid at ratio {layout.pixel_ratio}",
                pix_start,
            )
        pix_h, pix_w = layout.pixel_dims(sem_h, sem_w)
        widths = {len(row) for row in pix_rows}
        if len(widths) <= 1 and (len(pix_rows) != pix_h or widths != {pix_w}):
            found_w = next(iter(widths)) if widths else 0
            raise self._fail(
                ParseErrorKind.PIXEL_GRID_INCONSISTENT,
                f"pixel grid inconsistent: {len(pix_rows)}x{found_w}, "
                f"expected {pix_h}x{pix_w} for semantic {sem_h}x{sem_w}",
                pix_start,
            )
        for r, (row, end) in enumerate(zip(pix_rows, pix_ends)):
            if len(row) != pix_w:
                raise self._fail(
                    ParseErrorKind.ROW_LENGTH_MISMATCH,
                    f"row length mismatch at pixel row {r}: {len(row)} != {pix_w}",
                    end,
                )
        if len(pix_rows) != pix_h:
            raise self._fail(
                ParseErrorKind.PIXEL_GRID_INCONSISTENT,
                f"{len(pix_rows)} pixel rows, expected {pix_h}",
                self.pos - 1,
            )

        self._expect(layout.eoi, "<end_of_image>")
        return ImageTokenBlock(
            np.asarray(sem_rows, dtype=np.int64).reshape(sem_h, sem_w),
            np.asarray(pix_rows, dtype=np.int64).reshape(pix_h, pix_w),
        )


def _count_rejection(monitor: Optional[Monitor], error: ParseError) -> None:
    if monitor is not None:
        monitor.record_counter("parse_rejections", tags={"kind": error.kind.value})


def parse(tokens: Sequence[int], layout: VocabLayout, monitor: Optional[Monitor] = None) -> ImageTokenBlock:
    """
    Strictly parse exactly one image block.

    Rejections are counted as ``parse_rejections{kind=...}`` on ``monitor``.

    Raises:
        ParseError: With the kind and token position of the first violation
    """
    parser = _Parser(tokens, layout)
    try:
        block = parser.parse()
        if parser.pos != len(parser.tokens):
            raise ParseError(
                ParseErrorKind.TRAILING_TOKENS,
                parser.pos,
                f"{len(parser.tokens) - parser.pos} tokens after <end_of_image>",
            )
    except ParseError as exc:
        _count_rejection(monitor, exc)
        raise
    return block


def find_image_block(
    tokens: Sequence[int], layout: VocabLayout, monitor: Optional[Monitor] = None
) -> Tuple[int, int]:
    """(start, end) of the first <soi>..<eoi> span; raises ParseError if absent."""
    tokens = [int(t) for t in tokens]
    missing = None
    if layout.soi not in tokens:
        missing = "no <start_of_image>"
    else:
        start = tokens.index(layout.soi)
        if layout.eoi not in tokens[start:]:
            missing = "no <end_of_image>"
    if missing is not None:
        error = ParseError(ParseErrorKind.TRUNCATED, len(tokens), missing)
        _count_rejection(monitor, error)
        raise error
    return start, tokens.index(layout.eoi, start) + 1


class _Phase(Enum):
    START = "start"
    HEIGHT = "height"
    WIDTH = "width"
    SOS = "sos"
    SEM = "sem"
    SOP = "sop"
    PIX = "pix"
    EOI = "eoi"
    DONE = "done"


class GrammarState:
    """
    Incremental walker over the image grammar.

    ``allowed_ranges()`` lists the half-open id intervals that keep the
    prefix completable; ``advance`` consumes one token. ``target`` pins the
    height and width indicators to a semantic grid size.
    """

    def __init__(self, layout: VocabLayout, target: Optional[Tuple[int, int]] = None):
        self.layout = layout
        if target is not None:
            h, w = target
            if not (1 <= h <= layout.max_height and 1 <= w <= layout.max_width):
                raise DomainError(f"target grid {h}x{w} outside indicator range")
            if not (layout.valid_side(h) and layout.valid_side(w)):
                raise DomainError(f"target grid {h}x{w} has no integral pixel grid")
        self.target = target
        self.phase = _Phase.START
        self.position = 0
        self.sem_h = self.sem_w = 0
        self.rows = self.cols = 0
        self.row = self.col = 0

    @property
    def is_complete(self) -> bool:
        return self.phase is _Phase.DONE

    def _side_ranges(self, offset: int, limit: int, pinned: Optional[int]) -> List[Tuple[int, int]]:
        if pinned is not None:
            return [(offset + pinned - 1, offset + pinned)]
        sides = [n for n in range(1, limit + 1) if self.layout.valid_side(n)]
        if len(sides) == limit:
            return [(offset, offset + limit)]
        return [(offset + n - 1, offset + n) for n in sides]

    def _grid_ranges(self, kind: TokenKind, end_id: int) -> List[Tuple[int, int]]:
        eol = self.layout.eol
        if self.col < self.cols:
            return [self.layout.range_of(kind)]
        if self.row < self.rows:
            return [(eol, eol + 1)]
        return [(end_id, end_id + 1)]

    def allowed_ranges(self) -> List[Tuple[int, int]]:
        layout = self.layout
        phase = self.phase
        single = lambda i: [(i, i + 1)]  # noqa: E731
        if phase is _Phase.START:
            return single(layout.soi)
        if phase is _Phase.HEIGHT:
            pinned = self.target[0] if self.target else None
            return self._side_ranges(layout.height_offset, layout.max_height, pinned)
        if phase is _Phase.WIDTH:
            pinned = self.target[1] if self.target else None
            return self._side_ranges(layout.width_offset, layout.max_width, pinned)
        if phase is _Phase.SOS:
            return single(layout.sos)
        if phase is _Phase.SEM:
            return self._grid_ranges(TokenKind.SEMANTIC, layout.eos)
        if phase is _Phase.SOP:
            return single(layout.sop)
        if phase is _Phase.PIX:
            return self._grid_ranges(TokenKind.PIXEL, layout.eop)
        if phase is _Phase.EOI:
            return single(layout.eoi)
        return []

    def allows(self, token: int) -> bool:
        return any(lo <= token < hi for lo, hi in self.allowed_ranges())

    def mask(self) -> np.ndarray:
        """Boolean vector over V of ids that may come next."""
        out = np.zeros(self.layout.vocab_size, dtype=bool)
        for lo, hi in self.allowed_ranges():
            out[lo:hi] = True
        return out

    def _enter_grid(self, rows: int, cols: int) -> None:
        self.rows, self.cols = rows, cols
        self.row = self.col = 0

    def advance(self, token: int) -> None:
        """
        Consume one token.

        Raises:
            DomainError: If the token cannot extend the prefix
        """
        token = int(token)
        if not self.allows(token):
            raise DomainError(
                f"token {token} at position {self.position} cannot extend the image grammar "
                f"(phase {self.phase.value})"
            )
        layout = self.layout
        phase = self.phase
        if phase is _Phase.START:
            self.phase = _Phase.HEIGHT
        elif phase is _Phase.HEIGHT:
            self.sem_h = token - layout.height_offset + 1
            self.phase = _Phase.WIDTH
        elif phase is _Phase.WIDTH:
            self.sem_w = token - layout.width_offset + 1
            self.phase = _Phase.SOS
        elif phase is _Phase.SOS:
            self._enter_grid(self.sem_h, self.sem_w)
            self.phase = _Phase.SEM
        elif phase in (_Phase.SEM, _Phase.PIX):
            if token == layout.eol:
                self.row += 1
                self.col = 0
            elif token in (layout.eos, layout.eop):
                self.phase = _Phase.SOP if phase is _Phase.SEM else _Phase.EOI
            else:
                self.col += 1
        elif phase is _Phase.SOP:
            self._enter_grid(*layout.pixel_dims(self.sem_h, self.sem_w))
            self.phase = _Phase.PIX
        elif phase is _Phase.EOI:
            self.phase = _Phase.DONE
        self.position += 1

    def feed(self, tokens: Iterable[int]) -> "GrammarState":
        for token in tokens:
            self.advance(token)
        return self


def next_legal_mask(
    prefix: Sequence[int], layout: VocabLayout, target: Optional[Tuple[int, int]] = None
) -> np.ndarray:
    """
    Ids that can extend ``prefix`` toward a valid image block.

    A complete block yields an all-False mask.

    Raises:
        DomainError: If the prefix is not a prefix of any valid block
    """
    return GrammarState(layout, target).feed(prefix).mask()
