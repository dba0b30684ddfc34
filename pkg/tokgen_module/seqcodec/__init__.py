"""
Unified token grammar - vocabulary layout, serialize/parse of image
blocks, legality masks for constrained decoding and token-stream files
"""

from tokgen_module.seqcodec.block import ImageTokenBlock
from tokgen_module.seqcodec.grammar import (
    GrammarState,
    find_image_block,
    next_legal_mask,
    parse,
    serialize,
)
from tokgen_module.seqcodec.layout import (
    LocalToken,
    Marker,
    TokenKind,
    VocabLayout,
    layout_build,
)
from tokgen_module.seqcodec.stream import (
    MAGIC,
    decode_token_stream,
    encode_token_stream,
    read_token_stream,
    write_token_stream,
)

__all__ = [
    "ImageTokenBlock",
    "GrammarState",
    "find_image_block",
    "next_legal_mask",
    "parse",
    "serialize",
    "LocalToken",
    "Marker",
    "TokenKind",
    "VocabLayout",
    "layout_build",
    "MAGIC",
    "decode_token_stream",
    "encode_token_stream",
    "read_token_stream",
    "write_token_stream",
]
