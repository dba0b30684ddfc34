"""
Token conditioning for the diffusion decoder

Ids are looked up in frozen snapshots of the tokenizer codebooks, the
semantic map is brought to the pixel grid, and the two are concatenated
on channels. A learned null vector per branch stands in for a masked map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from einops import rearrange, repeat
from torch import Tensor, nn

from tokgen_module.core.errors import DomainError
from tokgen_module.diffusion.config import CondMaskSpec
from tokgen_module.tokenizer.model import DualViTok


@dataclass
class ConditionMask:
    """Corrupted ids and per-sample null flags for one batch."""

    sem_indices: Tensor
    pix_indices: Tensor
    null_sem: Tensor
    null_pix: Tensor
    perturbed: Tensor


def mask_condition(
    sem_indices: Tensor,
    pix_indices: Tensor,
    spec: CondMaskSpec,
    generator: torch.Generator,
    sem_codebook_size: int,
    pix_codebook_size: int,
) -> ConditionMask:
    """
    Draw the training-time corruption for a batch of grids (B, h, w).

    Token perturbation replaces ids before lookup; null flags tell the
    embedder to substitute the null embedding for a whole map.
    """
    batch = sem_indices.shape[0]
    device = sem_indices.device

    def draw(shape, p):
        return (torch.rand(shape, generator=generator) < p).to(device)

    perturbed = draw((batch,), spec.sample_perturb_prob)
    sem, pix = sem_indices, pix_indices
    if spec.sample_perturb_prob > 0 and spec.token_replace_prob > 0:
        out = []
        for ids, size in ((sem_indices, sem_codebook_size), (pix_indices, pix_codebook_size)):
            replace = draw(tuple(ids.shape), spec.token_replace_prob) & perturbed.view(-1, 1, 1)
            random_ids = torch.randint(0, size, tuple(ids.shape), generator=generator).to(device)
            out.append(torch.where(replace, random_ids, ids))
        sem, pix = out
    return ConditionMask(
        sem_indices=sem,
        pix_indices=pix,
        null_sem=draw((batch,), spec.sem_mask_prob),
        null_pix=draw((batch,), spec.pix_mask_prob),
        perturbed=perturbed,
    )


class ConditionEmbedder(nn.Module):
    """
    Codebook lookup + alignment + concatenation.

    The codebook tables are buffers copied from the tokenizer at
    construction; only the null embeddings are trainable.
    """

    def __init__(self, tokenizer: DualViTok):
        super().__init__()
        cfg = tokenizer.config
        with torch.no_grad():
            self.register_buffer("sem_codes", tokenizer.codebook_sem.effective().detach().clone())
            self.register_buffer("pix_codes", tokenizer.codebook_pix.effective().detach().clone())
        self.sem_downsample = cfg.sem_downsample
        self.pix_downsample = cfg.pix_downsample
        self.dim = cfg.codebook_dim
        self.null_sem = nn.Parameter(torch.zeros(self.dim))
        self.null_pix = nn.Parameter(torch.zeros(self.dim))
        nn.init.normal_(self.null_sem, std=0.02)
        nn.init.normal_(self.null_pix, std=0.02)

    @property
    def out_channels(self) -> int:
        return 2 * self.dim

    def source_dims(self, sem_indices: Tensor, pix_indices: Tensor):
        """(H, W) of the image the grids were tokenized from."""
        hs, ws = sem_indices.shape[-2:]
        hp, wp = pix_indices.shape[-2:]
        f_s, f_p = self.sem_downsample, self.pix_downsample
        if hs * f_s != hp * f_p or ws * f_s != wp * f_p:
            raise DomainError(
                f"inconsistent grids: semantic {hs}x{ws} and pixel {hp}x{wp}"
            )
        return hs * f_s, ws * f_s

    def forward(
        self,
        sem_indices: Tensor,
        pix_indices: Tensor,
        null_sem: Optional[Tensor] = None,
        null_pix: Optional[Tensor] = None,
    ) -> Tensor:
        """
        Conditioning map (B, 2D, hp, wp) at pixel-grid resolution.

        Raises:
            DomainError: If the grids disagree or ids are out of range
        """
        if sem_indices.ndim != 3 or pix_indices.ndim != 3:
            raise DomainError("expected batched grids (B, h, w)")
        self.source_dims(sem_indices, pix_indices)
        for name, ids, table in (("semantic", sem_indices, self.sem_codes), ("pixel", pix_indices, self.pix_codes)):
            if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
                raise DomainError(f"{name} ids out of range [0, {table.shape[0]})")

        batch = sem_indices.shape[0]
        hp, wp = pix_indices.shape[-2:]
        sem = rearrange(F.embedding(sem_indices, self.sem_codes), "b h w d -> b d h w")
        sem = F.interpolate(sem, size=(hp, wp), mode="nearest")
        pix = rearrange(F.embedding(pix_indices, self.pix_codes), "b h w d -> b d h w")

        device = sem.device
        if null_sem is not None:
            fill = repeat(self.null_sem, "d -> b d h w", b=batch, h=hp, w=wp)
            sem = torch.where(null_sem.to(device).view(-1, 1, 1, 1), fill, sem)
        if null_pix is not None:
            fill = repeat(self.null_pix, "d -> b d h w", b=batch, h=hp, w=wp)
            pix = torch.where(null_pix.to(device).view(-1, 1, 1, 1), fill, pix)
        return torch.cat([sem, pix], dim=1)
