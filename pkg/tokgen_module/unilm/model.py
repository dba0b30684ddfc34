"""
Toy unified autoregressive transformer

Continuous input, discrete output: image blocks given as inputs enter
through two MLP adapters (semantic, pixel); every other position goes
through one embedding table over the unified vocabulary. One output
projection of size V predicts text and image ids alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import Tensor, nn

from tokgen_module.core.errors import DomainError
from tokgen_module.seqcodec.layout import VocabLayout
from tokgen_module.unilm.config import ModelConfig
from tokgen_module.unilm.sequence import MultimodalSequence


def _adapter(in_dim: int, hidden: int, out_dim: int) -> nn.Module:
    return nn.Sequential(nn.Linear(in_dim, hidden), nn.GELU(), nn.Linear(hidden, out_dim))


@dataclass
class KVCache:
    """Per-layer keys and values of the positions seen so far."""

    keys: List[Optional[Tensor]] = field(default_factory=list)
    values: List[Optional[Tensor]] = field(default_factory=list)
    length: int = 0

    @classmethod
    def empty(cls, layers: int) -> "KVCache":
        return cls([None] * layers, [None] * layers, 0)


class CausalBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim), nn.GELU(), nn.Linear(mlp_ratio * dim, dim)
        )

    def forward(self, x: Tensor, cache: Optional[KVCache] = None, layer: int = 0) -> Tensor:
        q, k, v = rearrange(
            self.qkv(self.norm1(x)), "b n (three h d) -> three b h n d", three=3, h=self.heads
        )
        past = 0
        if cache is not None:
            past = cache.length
            if cache.keys[layer] is not None:
                k = torch.cat([cache.keys[layer], k], dim=2)
                v = torch.cat([cache.values[layer], v], dim=2)
            cache.keys[layer], cache.values[layer] = k, v
        n_new, n_all = q.shape[2], k.shape[2]
        rows = torch.arange(n_new, device=x.device)[:, None] + past
        cols = torch.arange(n_all, device=x.device)[None, :]
        attn = F.scaled_dot_product_attention(q, k, v, attn_mask=cols <= rows)
        x = x + self.proj(rearrange(attn, "b h n d -> b n (h d)"))
        return x + self.mlp(self.norm2(x))


class UnifiedLM(nn.Module):
    """
    Decoder-only transformer over a VocabLayout.

    Submodules: ``token_embedding`` (V x dim), ``sem_adapter``,
    ``pix_adapter``, ``pos_embedding``, ``blocks``, ``norm`` and the single
    output ``head`` (dim -> V).
    """

    def __init__(self, config: ModelConfig, layout: VocabLayout):
        super().__init__()
        if layout.text_vocab_size != config.text_vocab_size:
            raise DomainError("layout text vocabulary does not match the model config")
        self.config = config
        self.layout = layout
        vocab = layout.vocab_size
        self.token_embedding = nn.Embedding(vocab, config.dim)
        self.sem_adapter = _adapter(config.sem_feature_dim, config.adapter_hidden, config.dim)
        self.pix_adapter = _adapter(config.pix_feature_dim, config.adapter_hidden, config.dim)
        self.pos_embedding = nn.Embedding(config.context_length, config.dim)
        self.blocks = nn.ModuleList(
            CausalBlock(config.dim, config.heads, config.mlp_ratio) for _ in range(config.layers)
        )
        self.norm = nn.LayerNorm(config.dim)
        self.head = nn.Linear(config.dim, vocab)
        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.pos_embedding.weight, std=0.02)

    @property
    def vocab_size(self) -> int:
        return self.layout.vocab_size

    def _check_ids(self, tokens: Tensor) -> None:
        if tokens.numel() and (int(tokens.min()) < 0 or int(tokens.max()) >= self.vocab_size):
            raise DomainError(f"token ids must lie in [0, {self.vocab_size})")

    def embed_multimodal(self, seq: MultimodalSequence) -> Tensor:
        """
        Input embeddings (n, dim) for one sequence, without positions.

        Raises:
            DomainError: If continuous input is on and an input-image code
                position has no feature vector, or feature dims mismatch
        """
        device = self.token_embedding.weight.device
        tokens = seq.tokens.to(device)
        self._check_ids(tokens)
        emb = self.token_embedding(tokens)
        if not self.config.continuous_input:
            return emb

        covered = set(seq.sem_positions.tolist()) | set(seq.pix_positions.tolist())
        missing = [p for p in seq.image_input_positions.tolist() if p not in covered]
        if missing:
            raise DomainError(
                f"input image position {missing[0]} has no continuous features"
            )
        for positions, feats, adapter, expected in (
            (seq.sem_positions, seq.sem_features, self.sem_adapter, self.config.sem_feature_dim),
            (seq.pix_positions, seq.pix_features, self.pix_adapter, self.config.pix_feature_dim),
        ):
            if feats is None or positions.numel() == 0:
                continue
            if feats.shape[-1] != expected or feats.shape[0] != positions.numel():
                raise DomainError(
                    f"features of shape {tuple(feats.shape)} do not fit "
                    f"{positions.numel()} slots of dim {expected}"
                )
            adapted = adapter(feats.to(device=device, dtype=emb.dtype))
            emb = emb.index_copy(0, positions.to(device), adapted)
        return emb

    def embed_batch(self, batch: Sequence[MultimodalSequence]) -> Tuple[Tensor, Tensor]:
        """Right-padded embeddings (B, n, dim) and a validity mask (B, n)."""
        embs = [self.embed_multimodal(seq) for seq in batch]
        n = max(e.shape[0] for e in embs)
        out = embs[0].new_zeros(len(embs), n, self.config.dim)
        valid = torch.zeros(len(embs), n, dtype=torch.bool, device=out.device)
        for i, e in enumerate(embs):
            out[i, : e.shape[0]] = e
            valid[i, : e.shape[0]] = True
        return out, valid

    def forward(self, embeddings: Tensor, cache: Optional[KVCache] = None) -> Tensor:
        """
        Logits (B, n, V) for input embeddings (B, n, dim).

        With a cache, positions continue from ``cache.length`` and the
        cache is extended in place.
        """
        start = cache.length if cache is not None else 0
        n = embeddings.shape[1]
        if start + n > self.config.context_length:
            raise DomainError(
                f"context overflow: {start + n} positions, context is {self.config.context_length}"
            )
        positions = torch.arange(start, start + n, device=embeddings.device)
        x = embeddings + self.pos_embedding(positions)[None]
        for layer, block in enumerate(self.blocks):
            x = block(x, cache, layer)
        if cache is not None:
            cache.length += n
        return self.head(self.norm(x))

    def new_cache(self) -> KVCache:
        return KVCache.empty(len(self.blocks))

    def body_parameters(self):
        """Transformer body: positions, blocks and final norm."""
        for module in (self.pos_embedding, self.blocks, self.norm):
            yield from module.parameters()

    def adapter_parameters(self):
        yield from self.sem_adapter.parameters()
        yield from self.pix_adapter.parameters()

    def vision_row_mask(self) -> Tensor:
        """True for vocabulary rows that belong to the vision side (markers onward)."""
        mask = torch.zeros(self.vocab_size, dtype=torch.bool)
        mask[self.layout.marker_offset:] = True
        return mask


def next_token_loss(model: UnifiedLM, batch: Sequence[MultimodalSequence]) -> Tensor:
    """
    Mean cross-entropy over supervised positions of a batch.

    Position i is predicted from the logits at position i - 1.

    Raises:
        DomainError: If a label id is >= V (or negative), a sequence does
            not fit the context, or nothing is supervised
    """
    vocab = model.vocab_size
    for seq in batch:
        if len(seq) > model.config.context_length:
            raise DomainError(f"sequence of {len(seq)} exceeds context {model.config.context_length}")
        labels = seq.tokens[seq.loss_mask]
        if labels.numel() and (int(labels.max()) >= vocab or int(labels.min()) < 0):
            raise DomainError(f"label id outside [0, {vocab})")
    embeddings, _ = model.embed_batch(batch)
    logits = model(embeddings)
    n = logits.shape[1]
    labels = torch.full((len(batch), n), -100, dtype=torch.long, device=logits.device)
    for i, seq in enumerate(batch):
        supervised = torch.where(seq.loss_mask, seq.tokens, torch.full_like(seq.tokens, -100))
        labels[i, : len(seq)] = supervised.to(logits.device)
    targets = labels[:, 1:]
    if not bool((targets != -100).any()):
        raise DomainError("no supervised positions in batch")
    return F.cross_entropy(
        logits[:, :-1].reshape(-1, vocab), targets.reshape(-1), ignore_index=-100
    )
