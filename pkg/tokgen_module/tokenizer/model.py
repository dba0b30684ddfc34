"""
Dual-branch vision tokenizer

The semantic branch distils a frozen backbone through a quantized
bottleneck; the pixel branch is a conv autoencoder. Both code maps are
brought to the pixel-grid resolution and concatenated on channels before
the fusion decoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import Tensor, nn

from tokgen_module.core.errors import DomainError
from tokgen_module.telemetry.monitor import Monitor, NullMonitor
from tokgen_module.tokenizer.config import BranchMode, NoiseSpec, TokenizerConfig
from tokgen_module.tokenizer.losses import PatchDiscriminator
from tokgen_module.tokenizer.noise import inject_noise
from tokgen_module.tokenizer.pixel import PixelDecoder, PixelEncoder
from tokgen_module.tokenizer.semantic import SemanticBackbone, SemanticDecoder
from tokgen_module.vq.codebook import Codebook
from tokgen_module.vq.quantizer import QuantizeResult, quantize_grid, straight_through


@dataclass
class TokenizerOutput:
    """
    Token grids and the continuous features they were quantized from.

    Shapes (batched): sem_indices (B, hs, ws), pix_indices (B, hp, wp),
    sem_features (B, hs, ws, D), pix_features (B, hp, wp, D).
    """

    sem_indices: Tensor
    pix_indices: Tensor
    sem_features: Tensor
    pix_features: Tensor

    @property
    def sem_grid(self) -> Tuple[int, int]:
        return tuple(self.sem_indices.shape[-2:])

    @property
    def pix_grid(self) -> Tuple[int, int]:
        return tuple(self.pix_indices.shape[-2:])

    def select(self, i: int) -> "TokenizerOutput":
        """Unbatched view of sample i."""
        return TokenizerOutput(
            self.sem_indices[i], self.pix_indices[i], self.sem_features[i], self.pix_features[i]
        )


@dataclass
class ForwardPass:
    """Everything a training step needs from one tokenizer pass."""

    reconstruction: Tensor
    sem_reconstruction: Tensor
    sem_target: Tensor
    sem_result: Optional[QuantizeResult]
    pix_result: Optional[QuantizeResult]


class DualViTok(nn.Module):
    """
    Dual-branch tokenizer.

    Images are (B, 3, H, W) tensors in [0, 1] with H and W multiples of
    ``config.lcm_multiple``. A single (3, H, W) image is accepted by
    encode/reconstruct and the unbatched form is returned.

    Example:
        tok = DualViTok(TokenizerConfig.desk())
        out = tok.encode(images)                     # grids + features
        images_hat = tok.decode(out.sem_indices, out.pix_indices)
    """

    def __init__(self, config: Optional[TokenizerConfig] = None, monitor: Optional[Monitor] = None):
        super().__init__()
        self.config = config or TokenizerConfig.desk()
        self.monitor: Monitor = monitor or NullMonitor()
        cfg = self.config
        dim = cfg.codebook_dim

        self.semantic_backbone = SemanticBackbone(
            cfg.sem_downsample, cfg.backbone_dim, cfg.backbone_blocks,
            cfg.backbone_heads, cfg.backbone_seed,
        )
        self.semantic_proj = nn.Linear(cfg.backbone_dim, dim)
        self.semantic_decoder = SemanticDecoder(
            dim, cfg.backbone_dim, cfg.backbone_dim, cfg.sem_decoder_blocks, cfg.backbone_heads
        )
        self.pixel_encoder = PixelEncoder(cfg.enc_channels, cfg.pixel_stages, dim, cfg.dc_block)
        fused_dim = 2 * dim if cfg.branch is BranchMode.DUAL else dim
        self.pixel_decoder = PixelDecoder(fused_dim, cfg.dec_channels, cfg.pixel_stages, cfg.dc_block)
        self.codebook_sem = Codebook(cfg.sem_codebook_size, dim, cfg.quantizer, seed=cfg.seed)
        self.codebook_pix = Codebook(cfg.pix_codebook_size, dim, cfg.quantizer, seed=cfg.seed + 1)
        self.discriminator = PatchDiscriminator(cfg.disc_channels)

    # -- shape checks -------------------------------------------------

    def check_image_dims(self, height: int, width: int) -> None:
        m = self.config.lcm_multiple
        if height % m or width % m or height <= 0 or width <= 0:
            raise DomainError(f"dims must be divisible by {m}, got {height}x{width}")

    def grid_dims(self, height: int, width: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        """((hs, ws), (hp, wp)) for an image size."""
        self.check_image_dims(height, width)
        f_s, f_p = self.config.sem_downsample, self.config.pix_downsample
        return (height // f_s, width // f_s), (height // f_p, width // f_p)

    def image_dims(self, sem_grid: Tuple[int, int], pix_grid: Tuple[int, int]) -> Tuple[int, int]:
        """Source (H, W) of a grid pair; raises if the grids disagree."""
        f_s, f_p = self.config.sem_downsample, self.config.pix_downsample
        hs, ws = sem_grid
        hp, wp = pix_grid
        if hs * f_s != hp * f_p or ws * f_s != wp * f_p or min(hs, ws, hp, wp) <= 0:
            raise DomainError(
                f"inconsistent grids: semantic {hs}x{ws} and pixel {hp}x{wp} "
                f"do not describe one image under f_s={f_s}, f_p={f_p}"
            )
        return hs * f_s, ws * f_s

    def _check_images(self, images: Tensor) -> None:
        if images.ndim != 4 or images.shape[1] != 3:
            raise DomainError(f"expected images of shape (B, 3, H, W), got {tuple(images.shape)}")
        self.check_image_dims(images.shape[2], images.shape[3])

    # -- branch pieces ------------------------------------------------

    def semantic_features(self, images: Tensor) -> Tuple[Tensor, Tensor]:
        """(backbone target features, pre-quantization semantic features), channel-last."""
        with torch.no_grad():
            target = self.semantic_backbone(images)
        return target, self.semantic_proj(target)

    def pixel_features(self, images: Tensor) -> Tensor:
        return rearrange(self.pixel_encoder(images), "b d h w -> b h w d")

    def decode_codes(self, sem_codes: Tensor, pix_codes: Tensor) -> Tuple[Tensor, Tensor]:
        """
        Run both decoders on channel-last code maps.

        Returns:
            (image (B, 3, H, W), reconstructed backbone features (B, hs, ws, Db))
        """
        branch = self.config.branch
        hs, ws = sem_codes.shape[1:3]
        hp, wp = pix_codes.shape[1:3]
        sem_map = rearrange(sem_codes, "b h w d -> b d h w")
        pix_map = rearrange(pix_codes, "b h w d -> b d h w")

        if branch is BranchMode.PIXEL:
            fused = pix_map
            sem_in = rearrange(F.adaptive_avg_pool2d(pix_map, (hs, ws)), "b d h w -> b h w d")
        else:
            upsampled = F.interpolate(sem_map, size=(hp, wp), mode="nearest")
            fused = upsampled if branch is BranchMode.SEMANTIC else torch.cat([upsampled, pix_map], dim=1)
            sem_in = sem_codes
        return self.pixel_decoder(fused), self.semantic_decoder(sem_in)

    def _noisy_codes(
        self,
        codebook: Codebook,
        result: QuantizeResult,
        mixed: Tensor,
        noise: NoiseSpec,
        generator: torch.Generator,
    ) -> Tensor:
        noisy = inject_noise(result.indices, noise, generator, codebook.size)
        changed = (noisy != result.indices).unsqueeze(-1)
        return torch.where(changed, codebook.lookup(noisy).to(mixed.dtype), mixed)

    def forward(
        self,
        images: Tensor,
        quantize: bool = True,
        noise: Optional[NoiseSpec] = None,
        generator: Optional[torch.Generator] = None,
    ) -> ForwardPass:
        """
        Training pass.

        With ``quantize=False`` the decoders read the continuous features
        directly (no codebooks involved); used for gradient checks.
        ``noise`` perturbs token grids between quantizer and decoders.
        """
        self._check_images(images)
        cfg = self.config
        sem_target, sem_feat = self.semantic_features(images)
        pix_feat = self.pixel_features(images)

        if not quantize:
            recon, sem_recon = self.decode_codes(sem_feat, pix_feat)
            return ForwardPass(recon, sem_recon, sem_target, None, None)

        sem_result = quantize_grid(self.codebook_sem, sem_feat)
        pix_result = quantize_grid(self.codebook_pix, pix_feat)
        sem_codes = straight_through(sem_feat, sem_result.quantized)
        pix_codes = straight_through(pix_feat, pix_result.quantized)
        if noise is not None and noise.active:
            if generator is None:
                generator = torch.Generator().manual_seed(cfg.seed)
            if cfg.noise_semantic:
                sem_codes = self._noisy_codes(self.codebook_sem, sem_result, sem_codes, noise, generator)
            if cfg.noise_pixel:
                pix_codes = self._noisy_codes(self.codebook_pix, pix_result, pix_codes, noise, generator)
        recon, sem_recon = self.decode_codes(sem_codes, pix_codes)
        return ForwardPass(recon, sem_recon, sem_target, sem_result, pix_result)

    # -- inference ----------------------------------------------------

    @torch.no_grad()
    def encode(self, images: Tensor) -> TokenizerOutput:
        """
        Tokenize images.

        Raises:
            DomainError: If H or W is not a multiple of lcm(f_s, f_p)
        """
        single = images.ndim == 3
        if single:
            images = images.unsqueeze(0)
        self._check_images(images)
        _, sem_feat = self.semantic_features(images)
        pix_feat = self.pixel_features(images)
        sem = quantize_grid(self.codebook_sem, sem_feat)
        pix = quantize_grid(self.codebook_pix, pix_feat)
        out = TokenizerOutput(sem.indices, pix.indices, sem_feat, pix_feat)
        return out.select(0) if single else out

    @torch.no_grad()
    def decode(self, sem_indices: Tensor, pix_indices: Tensor) -> Tensor:
        """
        Images in [0, 1] from token grids.

        Accepts (hs, ws)/(hp, wp) or batched (B, hs, ws)/(B, hp, wp).

        Raises:
            DomainError: On inconsistent grid shapes or out-of-range ids
        """
        single = sem_indices.ndim == 2
        if single:
            sem_indices, pix_indices = sem_indices.unsqueeze(0), pix_indices.unsqueeze(0)
        if sem_indices.ndim != 3 or pix_indices.ndim != 3 or sem_indices.shape[0] != pix_indices.shape[0]:
            raise DomainError("token grids must be (h, w) or (B, h, w) with equal batch")
        self.image_dims(tuple(sem_indices.shape[1:]), tuple(pix_indices.shape[1:]))
        for name, ids, book in (
            ("semantic", sem_indices, self.codebook_sem),
            ("pixel", pix_indices, self.codebook_pix),
        ):
            if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= book.size):
                raise DomainError(f"{name} token ids must lie in [0, {book.size})")
        device = self.codebook_sem.effective().device
        sem_codes = self.codebook_sem.lookup(sem_indices.to(device))
        pix_codes = self.codebook_pix.lookup(pix_indices.to(device))
        images, _ = self.decode_codes(sem_codes, pix_codes)
        return images[0] if single else images

    @torch.no_grad()
    def reconstruct(self, images: Tensor, noise: Optional[NoiseSpec] = None, seed: int = 0) -> Tensor:
        """encode -> optional inject_noise -> decode."""
        single = images.ndim == 3
        if single:
            images = images.unsqueeze(0)
        out = self.encode(images)
        sem, pix = out.sem_indices, out.pix_indices
        if noise is not None and noise.active:
            generator = torch.Generator().manual_seed(seed)
            sem = inject_noise(sem, noise, generator, self.codebook_sem.size)
            pix = inject_noise(pix, noise, generator, self.codebook_pix.size)
        recon = self.decode(sem, pix)
        return recon[0] if single else recon

    def trainable_parameters(self):
        """Every parameter optimised by the tokenizer objective (not the discriminator)."""
        return [
            p for name, p in self.named_parameters()
            if p.requires_grad and not name.startswith("discriminator.")
        ]
