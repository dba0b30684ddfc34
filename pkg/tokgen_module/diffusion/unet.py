"""
Small conditional UNet predicting diffusion noise

Conditioning enters only by channel concatenation with the noisy image;
there is no cross-attention.
"""

from __future__ import annotations

import math
from typing import List

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from tokgen_module.tokenizer.layers import group_count


def timestep_embedding(t: Tensor, dim: int) -> Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, device=t.device, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    return torch.cat([args.sin(), args.cos()], dim=-1)


class TimeResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(group_count(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(group_count(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: Tensor, temb: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class ConditionalUNet(nn.Module):
    """
    ``levels`` resolutions; channel width doubles once after the first.

    Input: noisy image (B, 3, H, W) and condition map (B, C, H, W).
    """

    def __init__(self, cond_channels: int, width: int, levels: int, time_dim: int):
        super().__init__()
        self.time_dim = time_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        chans = [width * min(2 ** i, 2) for i in range(levels)]
        self.conv_in = nn.Conv2d(3 + cond_channels, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        for i in range(levels):
            self.down_blocks.append(TimeResBlock(chans[max(i - 1, 0)], chans[i], time_dim))
            if i < levels - 1:
                self.downsamples.append(nn.Conv2d(chans[i], chans[i], 3, stride=2, padding=1))

        self.mid = TimeResBlock(chans[-1], chans[-1], time_dim)

        self.up_blocks = nn.ModuleList()
        for i in reversed(range(levels)):
            out_ch = chans[max(i - 1, 0)]
            self.up_blocks.append(TimeResBlock(chans[i] * 2, out_ch, time_dim))
        self.norm_out = nn.GroupNorm(group_count(chans[0]), chans[0])
        self.conv_out = nn.Conv2d(chans[0], 3, 3, padding=1)

    def forward(self, x: Tensor, t: Tensor, cond: Tensor) -> Tensor:
        temb = self.time_mlp(timestep_embedding(t, self.time_dim))
        h = self.conv_in(torch.cat([x, cond], dim=1))
        skips: List[Tensor] = []
        for i, block in enumerate(self.down_blocks):
            h = block(h, temb)
            skips.append(h)
            if i < len(self.downsamples):
                h = self.downsamples[i](h)
        h = self.mid(h, temb)
        for j, block in enumerate(self.up_blocks):
            skip = skips.pop()
            if h.shape[-2:] != skip.shape[-2:]:
                h = F.interpolate(h, size=skip.shape[-2:], mode="nearest")
            h = block(torch.cat([h, skip], dim=1), temb)
        return self.conv_out(F.silu(self.norm_out(h)))
