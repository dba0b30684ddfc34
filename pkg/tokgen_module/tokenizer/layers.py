"""
Building blocks shared by the tokenizer networks

Attention blocks use 2D rotary position encoding so one set of weights
serves every grid size; resampling blocks implement the space-to-channel /
channel-to-space transforms with a parameter-free shortcut.
"""

from __future__ import annotations

from typing import Tuple

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import Tensor, nn


def group_count(channels: int) -> int:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return groups
    return 1


def rotary_2d(height: int, width: int, head_dim: int, device=None, dtype=None) -> Tuple[Tensor, Tensor]:
    """
    cos/sin tables of shape (height*width, head_dim // 2).

    The first half of the rotated pairs encodes the row, the second half the
    column.
    """
    quarter = head_dim // 4
    freqs = 1.0 / (10000.0 ** (torch.arange(quarter, device=device, dtype=torch.float64) / quarter))
    ys = torch.arange(height, device=device, dtype=torch.float64)
    xs = torch.arange(width, device=device, dtype=torch.float64)
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    angle_y = grid_y.reshape(-1, 1) * freqs
    angle_x = grid_x.reshape(-1, 1) * freqs
    angles = torch.cat([angle_y, angle_x], dim=-1)
    dtype = dtype or torch.get_default_dtype()
    return angles.cos().to(dtype), angles.sin().to(dtype)


def apply_rotary(x: Tensor, cos: Tensor, sin: Tensor) -> Tensor:
    """Rotate interleaved pairs of x (..., N, head_dim)."""
    x1 = x[..., 0::2]
    x2 = x[..., 1::2]
    out1 = x1 * cos - x2 * sin
    out2 = x1 * sin + x2 * cos
    return torch.stack([out1, out2], dim=-1).flatten(-2)


class AttentionBlock(nn.Module):
    """Pre-norm transformer block over a flattened (h, w) grid with 2D-RoPE."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(mlp_ratio * dim, dim),
        )

    def forward(self, x: Tensor, grid: Tuple[int, int]) -> Tensor:
        b, n, _ = x.shape
        qkv = self.qkv(self.norm1(x))
        q, k, v = rearrange(qkv, "b n (three h d) -> three b h n d", three=3, h=self.heads)
        cos, sin = rotary_2d(grid[0], grid[1], self.head_dim, device=x.device, dtype=x.dtype)
        q = apply_rotary(q, cos, sin)
        k = apply_rotary(k, cos, sin)
        attn = F.scaled_dot_product_attention(q, k, v)
        x = x + self.proj(rearrange(attn, "b h n d -> b n (h d)"))
        return x + self.mlp(self.norm2(x))


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(group_count(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm2 = nn.GroupNorm(group_count(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class SpaceToChannel(nn.Module):
    """
    2x downsampling by folding 2x2 neighbourhoods into channels.

    The shortcut averages groups of folded channels, so no information is
    discarded by a strided kernel.
    """

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        if out_ch % 4:
            raise ValueError("space-to-channel output channels must be divisible by 4")
        self.conv = nn.Conv2d(in_ch, out_ch // 4, 3, padding=1)
        self.out_ch = out_ch
        self.group = (4 * in_ch) // out_ch if (4 * in_ch) % out_ch == 0 else 0
        self.shortcut = None if self.group else nn.Conv2d(4 * in_ch, out_ch, 1)

    def forward(self, x: Tensor) -> Tensor:
        h = rearrange(self.conv(x), "b c (h p1) (w p2) -> b (c p1 p2) h w", p1=2, p2=2)
        folded = rearrange(x, "b c (h p1) (w p2) -> b (c p1 p2) h w", p1=2, p2=2)
        if self.shortcut is not None:
            return h + self.shortcut(folded)
        skip = rearrange(folded, "b (c g) h w -> b c g h w", g=self.group).mean(dim=2)
        return h + skip


class ChannelToSpace(nn.Module):
    """2x upsampling by unfolding channels into 2x2 neighbourhoods."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch * 4, 3, padding=1)
        self.repeat = (4 * out_ch) // in_ch if (4 * out_ch) % in_ch == 0 else 0
        self.shortcut = None if self.repeat else nn.Conv2d(in_ch, 4 * out_ch, 1)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv(x)
        if self.shortcut is not None:
            h = h + self.shortcut(x)
        else:
            h = h + x.repeat_interleave(self.repeat, dim=1)
        return rearrange(h, "b (c p1 p2) h w -> b c (h p1) (w p2)", p1=2, p2=2)


class StridedDownsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class NearestUpsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


def downsample_block(in_ch: int, out_ch: int, dc_block: bool) -> nn.Module:
    return SpaceToChannel(in_ch, out_ch) if dc_block else StridedDownsample(in_ch, out_ch)


def upsample_block(in_ch: int, out_ch: int, dc_block: bool) -> nn.Module:
    return ChannelToSpace(in_ch, out_ch) if dc_block else NearestUpsample(in_ch, out_ch)
