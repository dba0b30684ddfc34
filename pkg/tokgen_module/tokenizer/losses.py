"""
Tokenizer loss stack: semantic cosine, pixel L1, perceptual, hinge GAN
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from tokgen_module.core.errors import DomainError
from tokgen_module.telemetry.monitor import Monitor, NullMonitor
from tokgen_module.tokenizer.config import LossWeights
from tokgen_module.tokenizer.layers import group_count
from tokgen_module.tokenizer.semantic import SemanticBackbone


def cosine_similarity(a: Tensor, b: Tensor) -> "tuple[Tensor, Tensor]":
    """
    Per-position cosine over the last dim, and the zero-norm mask.

    Positions where either vector has zero norm get similarity 0.
    """
    dot = (a * b).sum(-1)
    denom = a.norm(dim=-1) * b.norm(dim=-1)
    zero = denom == 0
    cos = torch.where(zero, torch.zeros_like(dot), dot / torch.where(zero, torch.ones_like(denom), denom))
    return cos.clamp(-1.0, 1.0), zero


def semantic_loss(
    reconstructed: Tensor, target: Tensor, monitor: Optional[Monitor] = None
) -> Tensor:
    """
    Mean over positions of 1 - cos(reconstructed, target), in [0, 2].

    Zero-norm vectors count as cosine 0 and bump the
    ``semantic_zero_norm`` counter on the monitor.
    """
    if reconstructed.shape != target.shape:
        raise DomainError(
            f"shape mismatch: {tuple(reconstructed.shape)} vs {tuple(target.shape)}"
        )
    cos, zero = cosine_similarity(reconstructed, target)
    degenerate = int(zero.sum().item())
    if degenerate:
        (monitor or NullMonitor()).record_counter("semantic_zero_norm", degenerate)
    return (1.0 - cos).mean()


def perceptual_loss(backbone: SemanticBackbone, reconstructed: Tensor, target: Tensor) -> Tensor:
    """
    Distance between unit-normalised backbone activations at every block.

    Gradients reach ``reconstructed`` through the frozen backbone.
    """
    with torch.no_grad():
        target_feats = backbone.forward_features(target)
    recon_feats = backbone.forward_features(reconstructed)
    total = reconstructed.new_zeros(())
    for r, t in zip(recon_feats, target_feats):
        r = r / (r.norm(dim=-1, keepdim=True) + 1e-8)
        t = t / (t.norm(dim=-1, keepdim=True) + 1e-8)
        total = total + ((r - t) ** 2).sum(-1).mean()
    return total / len(recon_feats)


class PatchDiscriminator(nn.Module):
    """Two stride-2 convolutions then a per-patch logit map."""

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, channels, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(channels, 2 * channels, 4, stride=2, padding=1),
            nn.GroupNorm(group_count(2 * channels), 2 * channels),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * channels, 1, 3, padding=1),
        )

    def forward(self, images: Tensor) -> Tensor:
        return self.net(images * 2.0 - 1.0)


def hinge_d_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    return 0.5 * (F.relu(1.0 - real_logits).mean() + F.relu(1.0 + fake_logits).mean())


def hinge_g_loss(fake_logits: Tensor) -> Tensor:
    return F.relu(1.0 - fake_logits).mean()


@dataclass(frozen=True)
class LossReport:
    """
    Component losses of one tokenizer step.

    ``total`` is the weighted sum of cosine_sem, l1_pix, perceptual and
    gan_g; the quantizer terms are reported separately in ``vq`` and added
    to the optimised objective.
    """

    cosine_sem: float
    l1_pix: float
    perceptual: float
    gan_g: float
    gan_d: float
    vq: float
    total: float

    @classmethod
    def from_components(
        cls,
        weights: LossWeights,
        cosine_sem: float,
        l1_pix: float,
        perceptual: float,
        gan_g: float,
        gan_d: float = 0.0,
        vq: float = 0.0,
    ) -> "LossReport":
        total = (
            weights.cosine * cosine_sem
            + weights.l1 * l1_pix
            + weights.perceptual * perceptual
            + weights.gan * gan_g
        )
        return cls(cosine_sem, l1_pix, perceptual, gan_g, gan_d, vq, total)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)
