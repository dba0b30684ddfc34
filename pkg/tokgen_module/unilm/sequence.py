"""
Multimodal training / prompting sequences

A sequence is a flat list of global token ids plus, for image blocks fed
as inputs, the continuous feature vector of every code position. Labels
are the ids themselves; ``loss_mask[i]`` says whether id i is supervised
(predicted from the prefix before it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import torch
from torch import Tensor

from tokgen_module.core.errors import DomainError
from tokgen_module.seqcodec.block import ImageTokenBlock
from tokgen_module.seqcodec.grammar import serialize
from tokgen_module.seqcodec.layout import TokenKind, VocabLayout


@dataclass
class MultimodalSequence:
    """
    Token ids, supervision mask and continuous feature slots.

    sem_positions[i] is the position whose input is sem_features[i]; the
    same holds for pixel slots.
    """

    tokens: Tensor
    loss_mask: Tensor
    sem_positions: Tensor = field(default_factory=lambda: torch.zeros(0, dtype=torch.long))
    sem_features: Optional[Tensor] = None
    pix_positions: Tensor = field(default_factory=lambda: torch.zeros(0, dtype=torch.long))
    pix_features: Optional[Tensor] = None
    image_input_positions: Tensor = field(default_factory=lambda: torch.zeros(0, dtype=torch.long))

    def __len__(self) -> int:
        return int(self.tokens.numel())

    @property
    def has_features(self) -> bool:
        return self.sem_features is not None or self.pix_features is not None

    def masked_text(self, mask_id: int, positions: Sequence[int]) -> "MultimodalSequence":
        """Copy with the ids at ``positions`` replaced by ``mask_id``."""
        tokens = self.tokens.clone()
        if len(positions):
            tokens[torch.as_tensor(list(positions), dtype=torch.long)] = mask_id
        return MultimodalSequence(
            tokens,
            self.loss_mask.clone(),
            self.sem_positions,
            self.sem_features,
            self.pix_positions,
            self.pix_features,
            self.image_input_positions,
        )


class SequenceBuilder:
    """
    Fluent construction of a MultimodalSequence.

    Example:
        seq = (SequenceBuilder(layout)
            .image_input(block, out.sem_features, out.pix_features)
            .text(instruction)
            .image_target(target_block)
            .build())
    """

    def __init__(self, layout: VocabLayout):
        self.layout = layout
        self._tokens: List[int] = []
        self._supervise: List[bool] = []
        self._sem_pos: List[int] = []
        self._sem_feats: List[Tensor] = []
        self._pix_pos: List[int] = []
        self._pix_feats: List[Tensor] = []
        self._image_inputs: List[int] = []
        self._spans: dict = {}

    def __len__(self) -> int:
        return len(self._tokens)

    def _extend(self, ids: Sequence[int], supervise: bool) -> range:
        start = len(self._tokens)
        self._tokens.extend(int(i) for i in ids)
        self._supervise.extend([supervise] * len(ids))
        return range(start, len(self._tokens))

    def text(self, ids: Sequence[int], supervise: bool = False, name: Optional[str] = None) -> "SequenceBuilder":
        lo, hi = self.layout.range_of(TokenKind.TEXT)
        for i in ids:
            if not lo <= int(i) < hi:
                raise DomainError(f"id {i} is not a text id")
        span = self._extend(ids, supervise)
        if name:
            self._spans[name] = span
        return self

    def image_input(
        self,
        block: ImageTokenBlock,
        sem_features: Optional[Tensor] = None,
        pix_features: Optional[Tensor] = None,
        supervise: bool = False,
    ) -> "SequenceBuilder":
        """
        Image block whose code positions are model inputs.

        Features are channel-last grids matching the block, (hs, ws, D)
        and (hp, wp, D).
        """
        ids = serialize(block, self.layout)
        span = self._extend(ids, supervise)
        sem_lo, sem_hi = self.layout.range_of(TokenKind.SEMANTIC)
        pix_lo, pix_hi = self.layout.range_of(TokenKind.PIXEL)
        sem_positions = [p for p in span if sem_lo <= self._tokens[p] < sem_hi]
        pix_positions = [p for p in span if pix_lo <= self._tokens[p] < pix_hi]
        self._image_inputs.extend(sem_positions + pix_positions)
        if sem_features is not None:
            if tuple(sem_features.shape[:2]) != (block.sem_h, block.sem_w):
                raise DomainError("semantic features do not match the semantic grid")
            self._sem_pos.extend(sem_positions)
            self._sem_feats.append(sem_features.reshape(-1, sem_features.shape[-1]))
        if pix_features is not None:
            if tuple(pix_features.shape[:2]) != (block.pix_h, block.pix_w):
                raise DomainError("pixel features do not match the pixel grid")
            self._pix_pos.extend(pix_positions)
            self._pix_feats.append(pix_features.reshape(-1, pix_features.shape[-1]))
        return self

    def image_target(self, block: ImageTokenBlock) -> "SequenceBuilder":
        """Image block to be predicted; its ids enter through the vocabulary table."""
        self._extend(serialize(block, self.layout), True)
        return self

    def span(self, name: str) -> range:
        return self._spans.get(name, range(0))

    def build(self) -> MultimodalSequence:
        def cat(feats: List[Tensor]) -> Optional[Tensor]:
            return torch.cat(feats, dim=0) if feats else None

        loss_mask = torch.tensor(self._supervise, dtype=torch.bool)
        if len(loss_mask):
            loss_mask[0] = False
        return MultimodalSequence(
            tokens=torch.tensor(self._tokens, dtype=torch.long),
            loss_mask=loss_mask,
            sem_positions=torch.tensor(self._sem_pos, dtype=torch.long),
            sem_features=cat(self._sem_feats),
            pix_positions=torch.tensor(self._pix_pos, dtype=torch.long),
            pix_features=cat(self._pix_feats),
            image_input_positions=torch.tensor(self._image_inputs, dtype=torch.long),
        )
