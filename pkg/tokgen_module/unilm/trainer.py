"""
Stage-aware training of the unified model

Stage 1 optimises the adapters and the vision rows of the shared
embedding table and output head; the body stays frozen and the text rows
get zero gradient. Stage 2 and 3 optimise everything.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, Optional, Sequence

import torch

from tokgen_module.core.errors import DivergenceError
from tokgen_module.telemetry.metrics import TrainingMetricsCollector
from tokgen_module.telemetry.monitor import Monitor, NullMonitor
from tokgen_module.telemetry.run_logger import RunLogger, get_logger
from tokgen_module.unilm.model import UnifiedLM, next_token_loss
from tokgen_module.unilm.sequence import MultimodalSequence


class LMStage(str, Enum):
    VISION = "vision"
    ALIGNMENT = "alignment"
    SFT = "sft"


# Reference learning rates per stage and parameter group.
REFERENCE_LEARNING_RATES: Dict[LMStage, Dict[str, float]] = {
    LMStage.VISION: {"adapter": 1e-3, "vocab": 2e-4},
    LMStage.ALIGNMENT: {"adapter": 5e-5, "vocab": 5e-5, "body": 5e-5},
    LMStage.SFT: {"adapter": 2e-5, "vocab": 2e-5, "body": 2e-5},
}


class LMTrainer:
    """
    AdamW (no weight decay, constant rate) over the stage's groups.

    Args:
        model: Model to train
        stage: Which parameter groups are trainable
        learning_rates: {"adapter", "vocab", "body"} -> rate; defaults to
            the reference rates of the stage
        logger: Run logger
        collector: Optional metrics collector
        monitor: Receives the ``divergences`` counter
    """

    def __init__(
        self,
        model: UnifiedLM,
        stage: LMStage = LMStage.ALIGNMENT,
        learning_rates: Optional[Dict[str, float]] = None,
        logger: Optional[RunLogger] = None,
        collector: Optional[TrainingMetricsCollector] = None,
        monitor: Optional[Monitor] = None,
    ):
        self.model = model
        self.monitor = monitor or NullMonitor()
        self.stage = LMStage(stage)
        self.logger = logger or get_logger()
        self.collector = collector
        self.step = 0
        rates = dict(REFERENCE_LEARNING_RATES[self.stage])
        rates.update(learning_rates or {})

        vocab_params = [model.token_embedding.weight, model.head.weight, model.head.bias]
        body_params = list(model.body_parameters())
        adapter_params = list(model.adapter_parameters())
        vision_only = self.stage is LMStage.VISION

        for p in body_params:
            p.requires_grad_(not vision_only)
        for p in adapter_params + vocab_params:
            p.requires_grad_(True)

        groups = [
            {"params": adapter_params, "lr": rates["adapter"], "name": "adapter"},
            {"params": vocab_params, "lr": rates["vocab"], "name": "vocab"},
        ]
        if not vision_only:
            groups.append({"params": body_params, "lr": rates.get("body", rates["vocab"]), "name": "body"})
        self.optimizer = torch.optim.AdamW(groups, weight_decay=0.0)
        self._row_mask = model.vision_row_mask() if vision_only else None

    def _mask_text_rows(self) -> None:
        mask = self._row_mask.to(self.model.head.weight.device)
        for p in (self.model.token_embedding.weight, self.model.head.weight):
            if p.grad is not None:
                p.grad[~mask] = 0
        bias = self.model.head.bias
        if bias.grad is not None:
            bias.grad[~mask] = 0

    def train_step(self, batch: Sequence[MultimodalSequence]) -> float:
        """
        One optimisation step; returns the loss.

        Raises:
            DivergenceError: On a non-finite loss (no update applied)
        """
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        loss = next_token_loss(self.model, batch)
        if not torch.isfinite(loss):
            self.monitor.record_counter("divergences", tags={"component": "lm"})
            if self.collector is not None:
                self.collector.record_divergence()
            self.logger.error("non-finite loss, step aborted", step=self.step, component="lm")
            raise DivergenceError(self.step, "lm")
        loss.backward()
        if self._row_mask is not None:
            self._mask_text_rows()
        self.optimizer.step()
        value = float(loss.item())
        if self.collector is not None:
            self.collector.record_step({"loss": value})
        self.logger.debug("lm step", step=self.step, loss=value, stage=self.stage.value)
        self.step += 1
        return value
