"""
Token-conditioned diffusion decoder: training step and 2x sampling
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from tokgen_module.core.errors import DivergenceError, DomainError
from tokgen_module.diffusion.conditioning import ConditionEmbedder, mask_condition
from tokgen_module.diffusion.config import CondMaskSpec, DiffusionConfig
from tokgen_module.diffusion.schedule import NoiseSchedule
from tokgen_module.diffusion.unet import ConditionalUNet
from tokgen_module.telemetry.metrics import TrainingMetricsCollector
from tokgen_module.telemetry.monitor import Monitor
from tokgen_module.telemetry.run_logger import RunLogger, get_logger
from tokgen_module.tokenizer.model import DualViTok


class DiffusionDecoder(nn.Module):
    """
    Reconstructs an image at twice the token source resolution.

    Example:
        decoder = DiffusionDecoder(DiffusionConfig.desk(), tokenizer)
        out = tokenizer.encode(images)                   # 32x32 source
        hi_res = decoder.sample(out.sem_indices, out.pix_indices, seed=0)  # 64x64
    """

    def __init__(self, config: DiffusionConfig, tokenizer: DualViTok):
        super().__init__()
        self.config = config
        self.condition = ConditionEmbedder(tokenizer)
        self.unet = ConditionalUNet(
            self.condition.out_channels, config.width, config.levels, config.time_dim
        )
        self.schedule = NoiseSchedule(config.timesteps, config.beta_start, config.beta_end)

    def cond_embed(
        self,
        sem_indices: Tensor,
        pix_indices: Tensor,
        null_sem: Optional[Tensor] = None,
        null_pix: Optional[Tensor] = None,
    ) -> Tensor:
        """Condition map at pixel-grid resolution, (B, 2D, hp, wp)."""
        return self.condition(sem_indices, pix_indices, null_sem, null_pix)

    def output_dims(self, sem_indices: Tensor, pix_indices: Tensor):
        h, w = self.condition.source_dims(sem_indices, pix_indices)
        up = self.config.upscale
        m = self.config.spatial_multiple
        if (h * up) % m or (w * up) % m:
            raise DomainError(f"output dims {h * up}x{w * up} must be multiples of {m}")
        return h * up, w * up

    def _working_cond(self, cond: Tensor, size) -> Tensor:
        return F.interpolate(cond, size=size, mode="nearest")

    def loss(
        self,
        targets: Tensor,
        sem_indices: Tensor,
        pix_indices: Tensor,
        generator: torch.Generator,
        spec: Optional[CondMaskSpec] = None,
    ) -> Tensor:
        """
        Noise-prediction MSE for high-resolution targets in [0, 1].
        """
        if tuple(targets.shape[-2:]) != self.output_dims(sem_indices, pix_indices):
            raise DomainError("target dims must be twice the token source dims")
        device = targets.device
        batch = targets.shape[0]
        null_sem = null_pix = None
        if spec is not None:
            masked = mask_condition(
                sem_indices, pix_indices, spec, generator,
                self.condition.sem_codes.shape[0], self.condition.pix_codes.shape[0],
            )
            sem_indices, pix_indices = masked.sem_indices, masked.pix_indices
            null_sem, null_pix = masked.null_sem, masked.null_pix
        cond = self._working_cond(
            self.cond_embed(sem_indices, pix_indices, null_sem, null_pix), targets.shape[-2:]
        )
        x0 = targets * 2.0 - 1.0
        t = torch.randint(0, self.config.timesteps, (batch,), generator=generator).to(device)
        noise = torch.randn(tuple(x0.shape), generator=generator).to(device=device, dtype=x0.dtype)
        x_t = self.schedule.q_sample(x0, t, noise)
        return F.mse_loss(self.unet(x_t, t, cond), noise)

    @torch.no_grad()
    def sample(
        self,
        sem_indices: Tensor,
        pix_indices: Tensor,
        seed: int = 0,
        null_sem: bool = False,
        null_pix: bool = False,
    ) -> Tensor:
        """
        Ancestral sampling from pure noise; images (B, 3, 2H, 2W) in [0, 1].

        Accepts unbatched grids and returns an unbatched image for them.
        """
        single = sem_indices.ndim == 2
        if single:
            sem_indices, pix_indices = sem_indices.unsqueeze(0), pix_indices.unsqueeze(0)
        self.eval()
        device = self.condition.sem_codes.device
        sem_indices, pix_indices = sem_indices.to(device), pix_indices.to(device)
        batch = sem_indices.shape[0]
        size = self.output_dims(sem_indices, pix_indices)
        flags = lambda on: torch.full((batch,), on, dtype=torch.bool)  # noqa: E731
        cond = self._working_cond(
            self.cond_embed(sem_indices, pix_indices, flags(null_sem), flags(null_pix)), size
        )
        generator = torch.Generator().manual_seed(seed)
        x = torch.randn((batch, 3) + tuple(size), generator=generator).to(device)
        for step in reversed(range(self.config.timesteps)):
            t = torch.full((batch,), step, dtype=torch.long, device=device)
            eps = self.unet(x, t, cond)
            noise = torch.randn(tuple(x.shape), generator=generator).to(device) if step > 0 else None
            x = self.schedule.p_sample(x, step, eps, noise)
        images = ((x + 1.0) / 2.0).clamp(0.0, 1.0)
        return images[0] if single else images


class DiffusionTrainer:
    """
    Trains a DiffusionDecoder against a frozen tokenizer.

    The tokenizer only runs ``encode`` under no_grad and never enters the
    optimizer. Divergences are counted on ``monitor``, the tokenizer's by
    default.
    """

    def __init__(
        self,
        decoder: DiffusionDecoder,
        tokenizer: DualViTok,
        spec: Optional[CondMaskSpec] = None,
        logger: Optional[RunLogger] = None,
        collector: Optional[TrainingMetricsCollector] = None,
        monitor: Optional[Monitor] = None,
    ):
        self.decoder = decoder
        self.tokenizer = tokenizer
        self.monitor = monitor or tokenizer.monitor
        self.spec = spec if spec is not None else CondMaskSpec.reference()
        self.logger = logger or get_logger()
        self.collector = collector
        self.optimizer = torch.optim.AdamW(
            decoder.parameters(), lr=decoder.config.learning_rate, weight_decay=0.0
        )
        self.generator = torch.Generator().manual_seed(decoder.config.seed)
        self.step = 0

    def source_images(self, targets: Tensor) -> Tensor:
        """Half-resolution sources the tokenizer sees."""
        return F.interpolate(targets, scale_factor=0.5, mode="bilinear", antialias=True, align_corners=False).clamp(0, 1)

    def train_step(self, targets: Tensor) -> float:
        """
        One step on high-resolution targets (B, 3, 2H, 2W) in [0, 1].

        Raises:
            DivergenceError: On a non-finite loss (no update applied)
        """
        self.tokenizer.eval()
        tokens = self.tokenizer.encode(self.source_images(targets))
        self.decoder.train()
        self.optimizer.zero_grad(set_to_none=True)
        loss = self.decoder.loss(
            targets, tokens.sem_indices, tokens.pix_indices, self.generator, self.spec
        )
        if not torch.isfinite(loss):
            self.monitor.record_counter("divergences", tags={"component": "diffusion"})
            if self.collector is not None:
                self.collector.record_divergence()
            self.logger.error("non-finite loss, step aborted", step=self.step, component="diffusion")
            raise DivergenceError(self.step, "diffusion")
        loss.backward()
        self.optimizer.step()
        value = float(loss.item())
        if self.collector is not None:
            self.collector.record_step({"loss": value})
        self.logger.debug("diffusion step", step=self.step, loss=value)
        self.step += 1
        return value
