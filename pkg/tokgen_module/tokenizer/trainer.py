"""
Tokenizer training loop

One step: forward with noise injection, loss stack, AdamW update of every
trainable part (codebooks, pixel encoder/decoder, semantic projection and
decoder), then a discriminator update once the GAN phase has started.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from tokgen_module.core.errors import DivergenceError
from tokgen_module.telemetry.metrics import TrainingMetricsCollector
from tokgen_module.telemetry.run_logger import RunLogger, get_logger
from tokgen_module.tokenizer.losses import (
    LossReport,
    hinge_d_loss,
    hinge_g_loss,
    perceptual_loss,
    semantic_loss,
)
from tokgen_module.tokenizer.model import DualViTok


class TokenizerTrainer:
    """
    Single-writer trainer for a DualViTok.

    Args:
        model: Tokenizer to train
        total_steps: Planned number of steps; the GAN term starts at
            ``gan_start_fraction`` of it
        logger: Run logger (defaults to the process logger)
        collector: Optional metrics collector fed with every step
        learning_rate: Overrides ``config.learning_rate``
    """

    def __init__(
        self,
        model: DualViTok,
        total_steps: int,
        logger: Optional[RunLogger] = None,
        collector: Optional[TrainingMetricsCollector] = None,
        learning_rate: Optional[float] = None,
    ):
        cfg = model.config
        self.model = model
        self.total_steps = total_steps
        self.logger = logger or get_logger()
        self.collector = collector
        self.step = 0
        self.gan_start = int(total_steps * cfg.gan_start_fraction)
        self.optimizer = torch.optim.AdamW(
            model.trainable_parameters(),
            lr=learning_rate or cfg.learning_rate,
            weight_decay=0.0,
        )
        self.disc_optimizer = torch.optim.AdamW(
            model.discriminator.parameters(), lr=cfg.disc_learning_rate, weight_decay=0.0
        )
        self.generator = torch.Generator().manual_seed(cfg.seed)

    @property
    def gan_active(self) -> bool:
        return self.model.config.loss_weights.gan > 0 and self.step >= self.gan_start

    def compute_losses(
        self, images: Tensor, quantize: bool = True, noise: bool = True
    ) -> Tuple[Tensor, Dict[str, Tensor], Tensor]:
        """
        Objective tensor, component tensors and the reconstruction.

        The objective is the weighted loss stack plus the quantizer terms.
        """
        model = self.model
        cfg = model.config
        weights = cfg.loss_weights
        spec = cfg.noise if noise else None
        out = model(images, quantize=quantize, noise=spec, generator=self.generator)

        parts: Dict[str, Tensor] = {
            "cosine_sem": semantic_loss(out.sem_reconstruction, out.sem_target, model.monitor),
            "l1_pix": F.l1_loss(out.reconstruction, images),
            "perceptual": perceptual_loss(model.semantic_backbone, out.reconstruction, images),
        }
        if self.gan_active:
            parts["gan_g"] = hinge_g_loss(model.discriminator(out.reconstruction))
        else:
            parts["gan_g"] = images.new_zeros(())

        vq = images.new_zeros(())
        for result in (out.sem_result, out.pix_result):
            if result is not None:
                vq = vq + result.codebook_loss + weights.commitment * result.commitment_loss
        parts["vq"] = vq

        objective = (
            weights.cosine * parts["cosine_sem"]
            + weights.l1 * parts["l1_pix"]
            + weights.perceptual * parts["perceptual"]
            + weights.gan * parts["gan_g"]
            + vq
        )
        return objective, parts, out.reconstruction

    def _diverged(self, component: str) -> DivergenceError:
        self.model.monitor.record_counter("divergences", tags={"component": component})
        if self.collector is not None:
            self.collector.record_divergence()
        self.logger.error("non-finite loss, step aborted", step=self.step, component=component)
        return DivergenceError(self.step, component)

    def train_step(self, images: Tensor) -> LossReport:
        """
        One optimisation step.

        Raises:
            DivergenceError: If the objective or the discriminator loss is
                not finite; no parameter is updated in that case
        """
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        objective, parts, recon = self.compute_losses(images)
        if not torch.isfinite(objective):
            raise self._diverged("tokenizer")
        d_loss = None
        if self.gan_active:
            d_loss = hinge_d_loss(
                self.model.discriminator(images), self.model.discriminator(recon.detach())
            )
            if not torch.isfinite(d_loss):
                raise self._diverged("discriminator")

        objective.backward()
        self.optimizer.step()
        gan_d = 0.0
        if d_loss is not None:
            self.disc_optimizer.zero_grad(set_to_none=True)
            d_loss.backward()
            self.disc_optimizer.step()
            gan_d = float(d_loss.item())

        report = LossReport.from_components(
            self.model.config.loss_weights,
            cosine_sem=float(parts["cosine_sem"].item()),
            l1_pix=float(parts["l1_pix"].item()),
            perceptual=float(parts["perceptual"].item()),
            gan_g=float(parts["gan_g"].item()),
            gan_d=gan_d,
            vq=float(parts["vq"].item()),
        )
        if self.collector is not None:
            self.collector.record_step(report.to_dict())
        self.logger.debug("tokenizer step", step=self.step, **report.to_dict())
        self.step += 1
        return report
