"""
Semantic branch networks: the frozen backbone and the feature decoder
"""

from __future__ import annotations

from typing import List

import torch
from einops import rearrange
from torch import Tensor, nn

from tokgen_module.tokenizer.layers import AttentionBlock


class SemanticBackbone(nn.Module):
    """
    Frozen stand-in for a pretrained text-aligned vision encoder.

    A patch embedding with kernel = stride = ``downsample`` followed by
    attention blocks, initialised from a fixed seed and never trained:
    ``requires_grad`` is off and ``train()`` keeps it in eval mode.

    Output features are channel-last, shape (B, H/f, W/f, dim).
    """

    def __init__(self, downsample: int, dim: int, blocks: int, heads: int, seed: int):
        super().__init__()
        self.downsample = downsample
        self.dim = dim
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.patch_embed = nn.Conv2d(3, dim, kernel_size=downsample, stride=downsample)
            self.blocks = nn.ModuleList(AttentionBlock(dim, heads) for _ in range(blocks))
            self.norm = nn.LayerNorm(dim)
        self.requires_grad_(False)
        super().train(False)

    def train(self, mode: bool = True) -> "SemanticBackbone":
        return super().train(False)

    def forward_features(self, images: Tensor) -> List[Tensor]:
        """Patch embedding and every block output, each (B, h, w, dim)."""
        x = self.patch_embed(images * 2.0 - 1.0)
        h, w = x.shape[-2:]
        x = rearrange(x, "b c h w -> b (h w) c")
        outputs = [x]
        for block in self.blocks:
            x = block(x, (h, w))
            outputs.append(x)
        outputs[-1] = self.norm(outputs[-1])
        return [rearrange(o, "b (h w) c -> b h w c", h=h, w=w) for o in outputs]

    def forward(self, images: Tensor) -> Tensor:
        return self.forward_features(images)[-1]


class SemanticDecoder(nn.Module):
    """Reconstructs backbone features from (quantized) semantic codes."""

    def __init__(self, in_dim: int, dim: int, out_dim: int, blocks: int, heads: int):
        super().__init__()
        self.proj_in = nn.Linear(in_dim, dim)
        self.blocks = nn.ModuleList(AttentionBlock(dim, heads) for _ in range(blocks))
        self.norm = nn.LayerNorm(dim)
        self.proj_out = nn.Linear(dim, out_dim)

    def forward(self, codes: Tensor) -> Tensor:
        """codes (B, h, w, in_dim) -> features (B, h, w, out_dim)."""
        b, h, w, _ = codes.shape
        x = rearrange(self.proj_in(codes), "b h w c -> b (h w) c")
        for block in self.blocks:
            x = block(x, (h, w))
        x = self.proj_out(self.norm(x))
        return rearrange(x, "b (h w) c -> b h w c", h=h, w=w)
