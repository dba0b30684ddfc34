"""
Design-space ablations at toy scale

Every variant of an axis is trained under the same protocol (seed, step
budget, data) and scored on the same held-out images. Tokenizer axes
report PSNR / SSIM / semantic cosine / utilization; the input-mode axis
trains the unified model on top of one shared tokenizer and reports
held-out loss and token accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch

from tokgen_module.core.config_loader import replace
from tokgen_module.core.errors import ConfigError
from tokgen_module.harness.config import RunConfig
from tokgen_module.harness.data import SyntheticShapes
from tokgen_module.harness.evaluation import evaluate_lm, evaluate_tokenizer
from tokgen_module.harness.stages import (
    EncodedSample,
    Sample,
    build_task_sequence,
    encode_samples,
)
from tokgen_module.harness.text import ByteTextCodec
from tokgen_module.telemetry.run_logger import RunLogger, get_logger
from tokgen_module.tokenizer.config import BranchMode, NoiseKind, NoiseSpec, TokenizerConfig
from tokgen_module.tokenizer.model import DualViTok
from tokgen_module.tokenizer.trainer import TokenizerTrainer
from tokgen_module.unilm.model import UnifiedLM
from tokgen_module.unilm.trainer import LMStage, LMTrainer
from tokgen_module.vq.codebook import QuantizerKind

# (alpha, beta) pairs of the noise grid, in percent.
NOISE_GRID = ((10, 100), (10, 50), (10, 10), (50, 10), (100, 10))

AXES = (
    "quantizer_kind",
    "codebook_dim",
    "noise",
    "width",
    "dc_block",
    "branch",
    "pixel_codebook_size",
    "input_mode",
)


@dataclass
class AblationRow:
    variant: str
    metrics: Dict[str, float]

    def to_dict(self) -> dict:
        return {"variant": self.variant, **self.metrics}


@dataclass
class AblationTable:
    axis: str
    steps: int
    seed: int
    rows: List[AblationRow] = field(default_factory=list)

    def row(self, variant: str) -> AblationRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "steps": self.steps,
            "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows],
        }

    def format(self) -> str:
        """Plain-text table for the console."""
        columns = sorted({k for r in self.rows for k in r.metrics})
        header = ["variant"] + columns
        lines = ["  ".join(f"{h:>14}" for h in header)]
        for r in self.rows:
            cells = [f"{r.variant:>14}"]
            for c in columns:
                value = r.metrics.get(c)
                cells.append(f"{value:>14.4f}" if isinstance(value, float) else f"{str(value):>14}")
            lines.append("  ".join(cells))
        return "\n".join(lines)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path


def tokenizer_variants(base: TokenizerConfig, axis: str) -> List[Tuple[str, TokenizerConfig]]:
    """
    Labelled tokenizer configs of one axis.

    Raises:
        ConfigError: On an unknown or non-tokenizer axis
    """
    if axis == "quantizer_kind":
        return [(k.value, replace(base, quantizer=k)) for k in (QuantizerKind.VANILLA, QuantizerKind.SIMVQ)]
    if axis == "codebook_dim":
        return [(str(d), replace(base, codebook_dim=d)) for d in (8, 16, 32)]
    if axis == "noise":
        variants = [("none", replace(base, noise=NoiseSpec.off()))]
        for kind in (NoiseKind.RANDOM, NoiseKind.ZERO):
            for a, b in NOISE_GRID:
                spec = NoiseSpec(kind, a / 100, b / 100)
                variants.append((spec.label(), replace(base, noise=spec)))
        return variants
    if axis == "width":
        c = base.enc_channels
        return [
            (f"enc{c}-dec{c}", replace(base, enc_channels=c, dec_channels=c)),
            (f"enc{c}-dec{2 * c}", replace(base, enc_channels=c, dec_channels=2 * c)),
        ]
    if axis == "dc_block":
        return [("off", replace(base, dc_block=False)), ("on", replace(base, dc_block=True))]
    if axis == "branch":
        return [(m.value, replace(base, branch=m)) for m in (BranchMode.SEMANTIC, BranchMode.PIXEL, BranchMode.DUAL)]
    if axis == "pixel_codebook_size":
        k = base.pix_codebook_size
        return [(str(max(1, k // 4)), replace(base, pix_codebook_size=max(1, k // 4))), (str(k), base)]
    raise ConfigError(f"unknown ablation axis {axis!r}; known: {', '.join(AXES)}")


def _toy_data(config: RunConfig) -> Tuple[torch.Tensor, torch.Tensor, List[str], List[str]]:
    size = config.data.image_size
    train = SyntheticShapes(config.data.count, size, config.seed)
    held = SyntheticShapes(max(1, config.data.held_out), size, config.seed + 10_000)
    return (
        train.images(),
        held.images(),
        [train[i].caption for i in range(len(train))],
        [held[i].caption for i in range(len(held))],
    )


def train_tokenizer(
    tok_config: TokenizerConfig,
    images: torch.Tensor,
    steps: int,
    batch_size: int,
    seed: int,
    device: str = "cpu",
    logger: Optional[RunLogger] = None,
) -> DualViTok:
    """The fixed toy protocol: seeded init, seeded batch order, ``steps`` updates."""
    torch.manual_seed(seed)
    model = DualViTok(tok_config).to(device)
    trainer = TokenizerTrainer(model, steps, logger=logger)
    order = torch.Generator().manual_seed(seed)
    perm = torch.randperm(images.shape[0], generator=order)
    cursor = 0
    for _ in range(steps):
        if cursor + batch_size > images.shape[0]:
            perm = torch.randperm(images.shape[0], generator=order)
            cursor = 0
        idx = perm[cursor:cursor + batch_size]
        cursor += batch_size
        trainer.train_step(images[idx].to(device))
    return model


def _score_tokenizer(model: DualViTok, held: torch.Tensor, device: str) -> Dict[str, float]:
    scores = evaluate_tokenizer(model, held.to(device))
    return {
        "psnr": scores["psnr"],
        "ssim": scores["ssim"],
        "sem_cosine": scores["sem_cosine"],
        "util_semantic": scores["utilization"]["semantic"],
        "util_pixel": scores["utilization"]["pixel"],
    }


def _input_mode_rows(
    config: RunConfig,
    steps: int,
    data,
    log: RunLogger,
) -> List[AblationRow]:
    train_images, held_images, train_caps, held_caps = data
    cfg = config
    tokenizer = train_tokenizer(cfg.tokenizer, train_images, steps, cfg.train.batch_size, cfg.seed, cfg.device, log)
    tokenizer.eval()
    codec = ByteTextCodec()

    def encoded(images, captions) -> List[EncodedSample]:
        samples = [Sample(img, tuple(img.shape[1:]), cap) for img, cap in zip(images, captions)]
        return encode_samples(tokenizer, samples, cfg.device)

    train = encoded(train_images, train_caps)
    held = encoded(held_images, held_caps)
    tasks = ("reconstruction", "caption")
    rows = []
    for mode, continuous in (("continuous", True), ("discrete", False)):
        run_cfg = replace(cfg, lm=replace(cfg.lm, continuous_input=continuous))
        torch.manual_seed(cfg.seed + 1)
        model = UnifiedLM(run_cfg.lm, run_cfg.layout()).to(cfg.device)
        rate = cfg.train.learning_rate or 1e-3
        trainer = LMTrainer(model, LMStage.SFT, {"adapter": rate, "vocab": rate, "body": rate}, logger=log)
        for step in range(steps):
            task = tasks[step % len(tasks)]
            start = (step * cfg.train.batch_size) % len(train)
            batch = [train[(start + j) % len(train)] for j in range(cfg.train.batch_size)]
            trainer.train_step([build_task_sequence(task, e, run_cfg, codec) for e in batch])
        scores = evaluate_lm(model, [build_task_sequence(t, e, run_cfg, codec) for t in tasks for e in held])
        rows.append(AblationRow(mode, scores))
    return rows


def run_ablation(
    config: RunConfig,
    axis: str,
    steps: Optional[int] = None,
    logger: Optional[RunLogger] = None,
    output: Optional[Path] = None,
) -> AblationTable:
    """
    Train every variant of ``axis`` and return the comparison table.

    The table is also written to ``<output_dir>/ablations/<axis>.json``
    unless ``output`` names another file.

    Raises:
        ConfigError: On an unknown axis
    """
    if axis not in AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; known: {', '.join(AXES)}")
    log = (logger or get_logger()).bind(f"ablate-{axis}")
    steps = steps or config.train.steps
    table = AblationTable(axis, steps, config.seed)
    data = _toy_data(config)

    if axis == "input_mode":
        table.rows = _input_mode_rows(config, steps, data, log)
    else:
        train_images, held_images, _, _ = data
        for label, tok_config in tokenizer_variants(config.tokenizer, axis):
            log.info("variant start", variant=label)
            model = train_tokenizer(
                tok_config, train_images, steps, config.train.batch_size, config.seed, config.device, log
            )
            row = AblationRow(label, _score_tokenizer(model, held_images, config.device))
            log.info("variant done", variant=label, **row.metrics)
            table.rows.append(row)

    path = output or config.output_path / "ablations" / f"{axis}.json"
    table.save(path)
    log.info("ablation table written", path=str(path))
    return table
