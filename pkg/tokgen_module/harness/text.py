"""
Byte-level toy text codec

Ids 0-255 are UTF-8 bytes; 256-259 are <bos>, <eos>, <pad>, <mask_text>.
"""

from __future__ import annotations

from typing import List, Sequence

from tokgen_module.core.errors import DomainError
from tokgen_module.unilm.config import BYTE_TEXT_VOCAB, MASK_TEXT_ID


class ByteTextCodec:
    BOS = 256
    EOS = 257
    PAD = 258
    MASK = MASK_TEXT_ID
    vocab_size = BYTE_TEXT_VOCAB

    _SPECIAL = {256: "<bos>", 257: "<eos>", 258: "<pad>", 259: "<mask_text>"}

    def encode(self, text: str, bos: bool = True, eos: bool = True) -> List[int]:
        ids = list(text.encode("utf-8"))
        if bos:
            ids.insert(0, self.BOS)
        if eos:
            ids.append(self.EOS)
        return ids

    def decode(self, ids: Sequence[int], keep_special: bool = False) -> str:
        """Bytes back to text; invalid UTF-8 is replaced, specials dropped unless kept."""
        out = bytearray()
        parts: List[str] = []
        for i in ids:
            i = int(i)
            if not 0 <= i < self.vocab_size:
                raise DomainError(f"id {i} is not a text id")
            if i < 256:
                out.append(i)
            elif keep_special:
                parts.append(out.decode("utf-8", errors="replace"))
                parts.append(self._SPECIAL[i])
                out = bytearray()
        parts.append(out.decode("utf-8", errors="replace"))
        return "".join(parts)
