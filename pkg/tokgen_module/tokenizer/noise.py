"""
Token-grid noise injection

A grid of shape (h, w) is one sample; any other shape treats the leading
dimension as the batch. Random draws come from an explicit CPU generator
so a fixed seed reproduces the same perturbation on every device.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor

from tokgen_module.core.errors import DomainError
from tokgen_module.tokenizer.config import NoiseKind, NoiseSpec


@dataclass
class NoiseMask:
    """Which samples were selected and which tokens get replaced."""

    samples: Tensor
    tokens: Tensor

    @property
    def replaced(self) -> int:
        return int(self.tokens.sum().item())


def _sample_shape(shape: torch.Size) -> torch.Size:
    return torch.Size([1]) if len(shape) == 2 else shape[:1]


def noise_mask(shape: torch.Size, spec: NoiseSpec, generator: torch.Generator) -> NoiseMask:
    """
    Draw the perturbation pattern for a grid (or batch of grids).

    Each sample is selected with probability alpha; inside a selected
    sample each token is selected with probability beta.
    """
    shape = torch.Size(shape)
    batch_shape = _sample_shape(shape)
    if not spec.active:
        return NoiseMask(
            samples=torch.zeros(batch_shape, dtype=torch.bool),
            tokens=torch.zeros(shape, dtype=torch.bool),
        )
    samples = torch.rand(batch_shape, generator=generator) < spec.alpha
    tokens = torch.rand(shape, generator=generator) < spec.beta
    if len(shape) == 2:
        tokens &= samples[0]
    else:
        tokens &= samples.reshape(-1, *([1] * (len(shape) - 1)))
    return NoiseMask(samples=samples, tokens=tokens)


def inject_noise(
    indices: Tensor,
    spec: NoiseSpec,
    generator: torch.Generator,
    codebook_size: int,
    mask: Optional[NoiseMask] = None,
) -> Tensor:
    """
    Perturb a token grid according to ``spec``.

    random replaces selected tokens with uniform code ids, zero replaces
    them with id 0. Unselected samples come back unchanged.

    Args:
        indices: Integer grid (h, w) or batch (B, h, w)
        spec: Noise policy
        generator: CPU generator driving all draws
        codebook_size: K, upper bound of replacement ids
        mask: Precomputed pattern (from noise_mask); drawn when omitted

    Raises:
        DomainError: If indices fall outside [0, K)
    """
    if indices.numel() and (int(indices.min()) < 0 or int(indices.max()) >= codebook_size):
        raise DomainError(f"token ids must lie in [0, {codebook_size})")
    if not spec.active:
        return indices.clone()
    if mask is None:
        mask = noise_mask(indices.shape, spec, generator)
    if spec.kind is NoiseKind.ZERO:
        replacement = torch.zeros(indices.shape, dtype=indices.dtype)
    else:
        replacement = torch.randint(
            0, codebook_size, tuple(indices.shape), generator=generator, dtype=indices.dtype
        )
    tokens = mask.tokens.to(indices.device)
    return torch.where(tokens, replacement.to(indices.device), indices)
