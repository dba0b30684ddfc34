"""
Pixel branch encoder and the fusion decoder
"""

from __future__ import annotations

from typing import List

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from tokgen_module.tokenizer.layers import (
    ResBlock,
    downsample_block,
    group_count,
    upsample_block,
)


def _stage_channels(base: int, stages: int) -> List[int]:
    """Channel width per resolution level, doubling once then held."""
    return [base * min(2 ** i, 2) for i in range(stages + 1)]


class PixelEncoder(nn.Module):
    """
    Conv encoder, ``2 ** stages`` downsampling, output (B, D, H/f_p, W/f_p).
    """

    def __init__(self, base_channels: int, stages: int, out_dim: int, dc_block: bool):
        super().__init__()
        chans = _stage_channels(base_channels, stages)
        self.conv_in = nn.Conv2d(3, chans[0], 3, padding=1)
        layers = []
        for i in range(stages):
            layers.append(ResBlock(chans[i], chans[i]))
            layers.append(downsample_block(chans[i], chans[i + 1], dc_block))
        self.down = nn.Sequential(*layers)
        self.mid = ResBlock(chans[-1], chans[-1])
        self.norm_out = nn.GroupNorm(group_count(chans[-1]), chans[-1])
        self.conv_out = nn.Conv2d(chans[-1], out_dim, 3, padding=1)

    def forward(self, images: Tensor) -> Tensor:
        x = self.conv_in(images * 2.0 - 1.0)
        x = self.mid(self.down(x))
        return self.conv_out(F.silu(self.norm_out(x)))


class PixelDecoder(nn.Module):
    """
    Fusion decoder: channel-concatenated code maps at pixel-grid resolution
    to an RGB image in [0, 1].
    """

    def __init__(self, in_dim: int, base_channels: int, stages: int, dc_block: bool):
        super().__init__()
        chans = _stage_channels(base_channels, stages)
        self.conv_in = nn.Conv2d(in_dim, chans[-1], 3, padding=1)
        self.mid = ResBlock(chans[-1], chans[-1])
        layers = []
        for i in reversed(range(stages)):
            layers.append(ResBlock(chans[i + 1], chans[i + 1]))
            layers.append(upsample_block(chans[i + 1], chans[i], dc_block))
        self.up = nn.Sequential(*layers)
        self.norm_out = nn.GroupNorm(group_count(chans[0]), chans[0])
        self.conv_out = nn.Conv2d(chans[0], 3, 3, padding=1)

    def forward(self, codes: Tensor) -> Tensor:
        x = self.mid(self.conv_in(codes))
        x = self.up(x)
        return torch.sigmoid(self.conv_out(F.silu(self.norm_out(x))))
