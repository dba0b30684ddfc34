"""
Token-stream files

    b"UTG1" | u32 layout hash | u32 count | count x u32 token ids

All integers little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from tokgen_module.core.errors import DomainError, ParseError, ParseErrorKind
from tokgen_module.seqcodec.layout import VocabLayout

MAGIC = b"UTG1"
_HEADER = struct.Struct("<4sII")


def encode_token_stream(tokens: Sequence[int], layout: VocabLayout) -> bytes:
    ids = np.asarray(list(tokens), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= min(layout.vocab_size, 1 << 32)):
        raise DomainError("token ids must lie in the layout's vocabulary")
    return _HEADER.pack(MAGIC, layout.layout_hash(), int(ids.size)) + ids.astype("<u4").tobytes()


def decode_token_stream(
    data: bytes, layout: Optional[VocabLayout] = None
) -> Tuple[int, List[int]]:
    """
    (layout hash, token ids) from stream bytes.

    Raises:
        ParseError: BAD_STREAM_HEADER for a wrong magic or, when ``layout``
            is given, a hash mismatch; TRUNCATED when ids are missing
    """
    if len(data) < _HEADER.size:
        raise ParseError(ParseErrorKind.BAD_STREAM_HEADER, 0, "header shorter than 12 bytes")
    magic, layout_hash, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(ParseErrorKind.BAD_STREAM_HEADER, 0, f"bad magic {magic!r}")
    if layout is not None and layout_hash != layout.layout_hash():
        raise ParseError(
            ParseErrorKind.BAD_STREAM_HEADER,
            4,
            f"layout hash {layout_hash:#010x} != expected {layout.layout_hash():#010x}",
        )
    body = data[_HEADER.size:]
    if len(body) < 4 * count:
        raise ParseError(
            ParseErrorKind.TRUNCATED, len(body) // 4, f"{count} ids announced, {len(body) // 4} present"
        )
    if len(body) > 4 * count:
        raise ParseError(ParseErrorKind.TRAILING_TOKENS, count, "bytes after the last id")
    ids = np.frombuffer(body, dtype="<u4", count=count)
    return layout_hash, [int(t) for t in ids]


def write_token_stream(path: Union[str, Path], tokens: Sequence[int], layout: VocabLayout) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_token_stream(tokens, layout))
    return path


def read_token_stream(
    path: Union[str, Path], layout: Optional[VocabLayout] = None
) -> Tuple[int, List[int]]:
    return decode_token_stream(Path(path).read_bytes(), layout)
