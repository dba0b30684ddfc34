"""
Stage orchestration

run_stage executes one entry of the progressive schedule: tokenizer
stages at growing resolutions, the diffusion decoder on a frozen
tokenizer, then the three language-model stages. Each stage reads its
prerequisite's checkpoint, appends MetricsRecord lines to the run's
metrics file, writes ``checkpoints/<stage>.safetensors`` and a snapshot of
the run monitor to ``monitor/<stage>.json``. A partial checkpoint is
written every ``checkpoint_interval`` steps and picked up again by the
next call. Partials carry the trainer's optimizer moments and random
generator state, and the batch order is fast-forwarded on resume, so an
interrupted stage ends on the same weights as an uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import cycle
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import torch
from torch import Tensor, nn
from tqdm import tqdm

from tokgen_module.core.config_loader import replace
from tokgen_module.core.errors import StageError
from tokgen_module.datapipe.buckets import bucket_batches
from tokgen_module.datapipe.ratios import ASPECT_RATIOS
from tokgen_module.datapipe.stages import (
    STAGE_PREREQUISITES,
    ResolutionMode,
    StagePlan,
    stage_plans,
    stage_resolution,
)
from tokgen_module.diffusion.decoder import DiffusionDecoder, DiffusionTrainer
from tokgen_module.harness.checkpoint import (
    checkpoint_namespaces,
    load_checkpoint,
    load_extras,
    read_info,
    save_checkpoint,
)
from tokgen_module.harness.config import RunConfig
from tokgen_module.harness.data import EditTriples, ImageFolderDataset, SyntheticShapes
from tokgen_module.harness.evaluation import evaluate_diffusion, evaluate_lm, evaluate_tokenizer
from tokgen_module.harness.metrics import MetricsRecord
from tokgen_module.harness.text import ByteTextCodec
from tokgen_module.seqcodec.block import ImageTokenBlock
from tokgen_module.telemetry.log_level import LogLevel
from tokgen_module.telemetry.metrics import TrainingMetricsCollector
from tokgen_module.telemetry.monitor import InMemoryMonitor, Monitor
from tokgen_module.telemetry.run_logger import RunLogger, RunLoggerBuilder
from tokgen_module.tokenizer.model import DualViTok, TokenizerOutput
from tokgen_module.tokenizer.trainer import TokenizerTrainer
from tokgen_module.unilm.model import UnifiedLM
from tokgen_module.unilm.sequence import MultimodalSequence, SequenceBuilder
from tokgen_module.unilm.trainer import LMStage, LMTrainer

TOKENIZER_NAMESPACES = (
    "semantic_backbone", "semantic_proj", "semantic_decoder", "pixel_encoder",
    "pixel_decoder", "codebook_sem", "codebook_pix", "discriminator",
)

LM_STAGES = {
    "lm-1": LMStage.VISION,
    "lm-2-1": LMStage.ALIGNMENT,
    "lm-2-2": LMStage.ALIGNMENT,
    "lm-3": LMStage.SFT,
}

# Ratios used for synthetic anyres data; the extreme ones rarely fit the toy grids.
SYNTHETIC_RATIOS = ASPECT_RATIOS[:5]


@dataclass
class Sample:
    image: Tensor
    resolution: Tuple[int, int]
    caption: str = ""
    instruction: str = ""
    target: Optional[Tensor] = None


@dataclass
class StageResult:
    stage: str
    checkpoint: Path
    records: List[MetricsRecord] = field(default_factory=list)
    skipped: bool = False
    start_step: int = 0
    monitor: Dict[str, Any] = field(default_factory=dict)


# -- builders ----------------------------------------------------------


def build_logger(config: RunConfig, console: bool = True) -> RunLogger:
    """Console plus JSON log file and metrics file under the output directory."""
    out = config.output_path
    builder = (
        RunLoggerBuilder()
        .with_name("tokgen")
        .with_level(LogLevel.from_string(config.log_level))
        .with_file(out / "run.log.jsonl")
        .with_metrics_file(out / "metrics.jsonl")
    )
    if console:
        builder = builder.with_console()
    return builder.build()


def tokenizer_modules(model: DualViTok) -> Dict[str, nn.Module]:
    return {name: getattr(model, name) for name in TOKENIZER_NAMESPACES}


def build_tokenizer(config: RunConfig, monitor: Optional[Monitor] = None) -> DualViTok:
    torch.manual_seed(config.seed)
    return DualViTok(config.tokenizer, monitor=monitor).to(config.device)


def build_lm(config: RunConfig) -> UnifiedLM:
    torch.manual_seed(config.seed + 1)
    return UnifiedLM(config.lm, config.layout()).to(config.device)


def build_diffusion(config: RunConfig, tokenizer: DualViTok, learning_rate: Optional[float] = None) -> DiffusionDecoder:
    torch.manual_seed(config.seed + 2)
    diff_cfg = config.diffusion
    if learning_rate is not None:
        diff_cfg = replace(diff_cfg, learning_rate=learning_rate)
    return DiffusionDecoder(diff_cfg, tokenizer).to(config.device)


def checkpoint_path(config: RunConfig, stage: str, partial: bool = False) -> Path:
    suffix = ".partial.safetensors" if partial else ".safetensors"
    return config.output_path / "checkpoints" / f"{stage}{suffix}"


def load_tokenizer(
    config: RunConfig, path: Path, allow_mismatch: bool = False, monitor: Optional[Monitor] = None
) -> DualViTok:
    model = build_tokenizer(config, monitor)
    load_checkpoint(path, tokenizer_modules(model), config, allow_mismatch=allow_mismatch)
    model.eval()
    return model


# -- stage plans -------------------------------------------------------


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def resolve_plan(config: RunConfig, stage: str) -> StagePlan:
    """
    The stage plan scaled to the run's base image size.

    ``data.image_size`` plays the role of the first stage's fixed size;
    other sizes scale with it. Divisors are raised to the tokenizer's
    multiple (twice that for diffusion targets), and language-model
    stages are capped so the semantic grid fits the size indicators.
    """
    plans = stage_plans(config.train.stage_preset)
    if stage not in plans:
        raise StageError(stage, "unknown stage")
    plan = plans[stage]
    m = config.tokenizer.lcm_multiple
    divisor = _lcm(plan.divisor, 2 * m if stage == "diffusion" else m)
    factor = Fraction(config.data.image_size, plans["tok-1"].main_size)

    def scale(size: int) -> int:
        return max(divisor, int(size * factor) // divisor * divisor)

    main = scale(plan.main_size)
    max_size = scale(plan.max_size) if plan.max_size is not None else None
    if stage in LM_STAGES:
        cap = min(config.lm.max_height, config.lm.max_width) * config.tokenizer.sem_downsample
        cap = max(divisor, cap // divisor * divisor)
        main = min(main, cap)
        max_size = min(max_size, cap) if max_size is not None else None
    return dataclasses.replace(plan, main_size=main, max_size=max_size, divisor=divisor)


# -- data --------------------------------------------------------------


def _resolutions(plan: StagePlan, count: int) -> List[Tuple[int, int]]:
    if plan.mode is ResolutionMode.FIXED:
        return [(plan.square_size, plan.square_size)] * count
    ratios = cycle(SYNTHETIC_RATIOS)
    out = []
    for _ in range(count):
        r = next(ratios)
        out.append(stage_resolution(plan, r.numerator * 64, r.denominator * 64))
    return out


def stage_samples(config: RunConfig, plan: StagePlan, split: str = "train") -> List[Sample]:
    """Images (and captions / edits) for a stage at the stage's resolutions."""
    data = config.data
    seed = config.seed if split == "train" else config.seed + 10_000
    count = data.count if split == "train" else max(1, min(data.held_out, config.train.eval_images))

    if data.kind == "folder":
        dataset = ImageFolderDataset(data.folder, stage=plan)
        if split == "train":
            indices = range(max(0, len(dataset) - data.held_out))
        else:
            indices = range(max(0, len(dataset) - data.held_out), len(dataset))
        return [Sample(dataset[i], dataset.resolutions[i], caption="an image") for i in indices]

    samples = []
    for i, res in enumerate(_resolutions(plan, count)):
        shape = SyntheticShapes(count, res, seed)[i]
        edit = EditTriples(count, res, data.edit_instruction, seed)[i]
        samples.append(Sample(shape.image, res, shape.caption, edit.instruction, edit.target))
    return samples


def _batches(samples: Sequence[Sample], batch_size: int, seed: int) -> Iterator[List[Sample]]:
    epoch = 0
    while True:
        batches = bucket_batches([(s, s.resolution) for s in samples], batch_size, shuffle_seed=seed + epoch)
        for batch in batches:
            yield batch
        epoch += 1


def _advance(iterator: Iterator, count: int) -> None:
    for _ in range(count):
        next(iterator)


def _stack(images: Sequence[Tensor], device: str) -> Tensor:
    return torch.stack(list(images)).to(device)


# -- language-model sequences ------------------------------------------


@dataclass
class EncodedSample:
    sample: Sample
    tokens: TokenizerOutput
    target_tokens: Optional[TokenizerOutput] = None


def encode_samples(tokenizer: DualViTok, samples: Sequence[Sample], device: str) -> List[EncodedSample]:
    out = []
    for s in samples:
        tokens = tokenizer.encode(s.image.to(device))
        target = tokenizer.encode(s.target.to(device)) if s.target is not None else None
        out.append(EncodedSample(s, tokens, target))
    return out


def build_task_sequence(
    task: str,
    item: EncodedSample,
    config: RunConfig,
    codec: ByteTextCodec,
) -> MultimodalSequence:
    """
    One training sequence for a task.

    reconstruction: the image as continuous input, then its own token
    block as the target. caption: image input, supervised caption.
    text: supervised caption alone. text_to_image: caption prompt,
    target block. edit: image input, instruction, edited target block.
    """
    layout = config.layout()
    tokens = item.tokens
    block = ImageTokenBlock(tokens.sem_indices, tokens.pix_indices)
    builder = SequenceBuilder(layout)
    caption = codec.encode(item.sample.caption)
    if task == "reconstruction":
        builder.image_input(block, tokens.sem_features, tokens.pix_features).image_target(block)
    elif task == "caption":
        builder.image_input(block, tokens.sem_features, tokens.pix_features).text(caption, supervise=True)
    elif task == "text":
        builder.text(caption, supervise=True)
    elif task == "text_to_image":
        builder.text(caption).image_target(block)
    elif task == "edit":
        if item.target_tokens is None:
            raise StageError("lm", "edit task needs edit targets")
        target = ImageTokenBlock(item.target_tokens.sem_indices, item.target_tokens.pix_indices)
        builder.image_input(block, tokens.sem_features, tokens.pix_features)
        builder.text(codec.encode(item.sample.instruction))
        builder.image_target(target)
    else:
        raise StageError("lm", f"unknown task {task!r}")
    return builder.build()


# -- the runner --------------------------------------------------------


def _required_namespaces(stage: str) -> Tuple[str, ...]:
    if stage in LM_STAGES:
        return TOKENIZER_NAMESPACES + ("lm",)
    return TOKENIZER_NAMESPACES


def _check_prerequisites(config: RunConfig, stage: str) -> Optional[Path]:
    previous = None
    for required in STAGE_PREREQUISITES[stage]:
        path = checkpoint_path(config, required)
        if not path.exists() or not read_info(path).complete:
            raise StageError(stage, f"missing prerequisite checkpoint for stage '{required}' at {path}")
        recorded = set(checkpoint_namespaces(path))
        missing = [n for n in _required_namespaces(required) if n not in recorded]
        if missing:
            raise StageError(stage, f"prerequisite checkpoint {path} lacks {', '.join(missing)}")
        previous = path
    return previous


def trainer_state(trainer: object) -> Dict[str, Tensor]:
    """
    Random generator states and optimizer moments of a trainer, flat.

    Keys are ``<attribute>.rng`` for generators and
    ``<attribute>.<param index>.<field>`` for optimizer state.
    """
    state: Dict[str, Tensor] = {}
    for name, value in vars(trainer).items():
        if isinstance(value, torch.Generator):
            state[f"{name}.rng"] = value.get_state()
        elif isinstance(value, torch.optim.Optimizer):
            for index, fields in value.state_dict()["state"].items():
                for key, tensor in fields.items():
                    if torch.is_tensor(tensor):
                        state[f"{name}.{index}.{key}"] = tensor.reshape(1) if tensor.dim() == 0 else tensor
    return state


def restore_trainer_state(trainer: object, state: Dict[str, Tensor]) -> None:
    """Inverse of trainer_state; attributes with no saved entries are left alone."""
    for name, value in vars(trainer).items():
        if isinstance(value, torch.Generator) and f"{name}.rng" in state:
            value.set_state(state[f"{name}.rng"])
        elif isinstance(value, torch.optim.Optimizer):
            prefix = f"{name}."
            per_param: Dict[int, Dict[str, Tensor]] = {}
            for key, tensor in state.items():
                if not key.startswith(prefix) or key == f"{name}.rng":
                    continue
                index, _, field_name = key[len(prefix):].partition(".")
                per_param.setdefault(int(index), {})[field_name] = (
                    tensor.reshape(()) if field_name == "step" else tensor
                )
            if per_param:
                current = value.state_dict()
                current["state"] = per_param
                value.load_state_dict(current)


def _tokenizer_source(config: RunConfig, stage: str, prerequisite: Optional[Path]) -> Path:
    """Checkpoint that carries the trained tokenizer for diffusion/LM stages."""
    if prerequisite is None:
        raise StageError(stage, "no tokenizer checkpoint")
    return prerequisite


class StageRunner:
    """
    Runs stages of one RunConfig.

    Args:
        config: Run configuration
        logger: Run logger (defaults to console + files under output_dir)
        allow_mismatch: Load checkpoints written under another structure
        progress: Show a tqdm progress bar
        monitor: Counters and gauges fed by the models and trainers; reset
            at every stage start and written to ``monitor/<stage>.json``

    Optimizer moments, trainer generators and the batch position survive
    a resume from a partial checkpoint.
    """

    def __init__(
        self,
        config: RunConfig,
        logger: Optional[RunLogger] = None,
        allow_mismatch: bool = False,
        progress: bool = False,
        monitor: Optional[InMemoryMonitor] = None,
    ):
        self.config = config
        self.logger = logger or build_logger(config, console=False)
        self.allow_mismatch = allow_mismatch
        self.progress = progress
        self.monitor = monitor or InMemoryMonitor()
        self.codec = ByteTextCodec()

    def _record(self, stage_log: RunLogger, record: MetricsRecord, records: List[MetricsRecord]) -> None:
        records.append(record)
        stage_log.log_metrics(record)
        stage_log.info("eval", step=record.step, psnr=record.psnr, ssim=record.ssim, **record.losses)

    def _steps(self, start: int) -> Iterator[int]:
        steps = range(start, self.config.train.steps)
        if self.progress:
            return iter(tqdm(steps, initial=start, total=self.config.train.steps, leave=False))
        return iter(steps)

    def _resume(self, stage: str, modules: Dict[str, nn.Module], trainer: object) -> int:
        partial = checkpoint_path(self.config, stage, partial=True)
        if not partial.exists():
            return 0
        info = load_checkpoint(partial, modules, self.config, allow_mismatch=self.allow_mismatch)
        restore_trainer_state(trainer, load_extras(partial))
        trainer.step = info.step
        return info.step

    def _save(
        self,
        stage: str,
        modules: Dict[str, nn.Module],
        step: int,
        complete: bool,
        trainer: Optional[object] = None,
    ) -> Path:
        path = checkpoint_path(self.config, stage, partial=not complete)
        extras = trainer_state(trainer) if trainer is not None and not complete else None
        save_checkpoint(path, modules, self.config, stage=stage, step=step, complete=complete, extras=extras)
        if complete:
            checkpoint_path(self.config, stage, partial=True).unlink(missing_ok=True)
        return path

    def run(self, stage: str, fresh: bool = False) -> StageResult:
        """
        Execute one stage.

        Raises:
            StageError: If the stage is unknown or a prerequisite
                checkpoint is missing or lacks a required namespace
        """
        if stage not in STAGE_PREREQUISITES:
            raise StageError(stage, "unknown stage")
        final = checkpoint_path(self.config, stage)
        if fresh:
            final.unlink(missing_ok=True)
            checkpoint_path(self.config, stage, partial=True).unlink(missing_ok=True)
        elif final.exists() and read_info(final).complete:
            self.logger.bind(stage).info("stage already complete, skipping", path=str(final))
            return StageResult(stage, final, skipped=True)

        prerequisite = _check_prerequisites(self.config, stage)
        plan = resolve_plan(self.config, stage)
        stage_log = self.logger.bind(stage)
        stage_log.info("stage start", mode=plan.mode.value, main_size=plan.main_size, max_size=plan.max_size)
        self.monitor.reset()
        if stage.startswith("tok-"):
            result = self._run_tokenizer(stage, plan, prerequisite, stage_log)
        elif stage == "diffusion":
            result = self._run_diffusion(stage, plan, prerequisite, stage_log)
        else:
            result = self._run_lm(stage, plan, prerequisite, stage_log)
        result.monitor = self._write_monitor(stage)
        stage_log.info("stage done", path=str(result.checkpoint))
        self.logger.flush()
        return result

    def _write_monitor(self, stage: str) -> Dict[str, Any]:
        snapshot = self.monitor.to_dict()
        path = self.config.output_path / "monitor" / f"{stage}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(snapshot, indent=2, sort_keys=True), encoding="utf-8")
        return snapshot

    # -- tokenizer -----------------------------------------------------

    def _run_tokenizer(self, stage: str, plan: StagePlan, prerequisite: Optional[Path], log: RunLogger) -> StageResult:
        cfg = self.config
        model = build_tokenizer(cfg, self.monitor)
        modules = tokenizer_modules(model)
        if prerequisite is not None:
            load_checkpoint(prerequisite, modules, cfg, allow_mismatch=self.allow_mismatch)
        rate = cfg.train.learning_rate or plan.learning_rates.get("tokenizer")
        trainer = TokenizerTrainer(model, cfg.train.steps, logger=log, collector=TrainingMetricsCollector(), learning_rate=rate)
        start = self._resume(stage, modules, trainer)

        train = stage_samples(cfg, plan, "train")
        held = stage_samples(cfg, plan, "eval")
        batches = _batches(train, cfg.train.batch_size, cfg.seed)
        _advance(batches, start)
        records: List[MetricsRecord] = []

        for step in self._steps(start):
            batch = next(batches)
            report = trainer.train_step(_stack([s.image for s in batch], cfg.device))
            done = step + 1
            if done % cfg.train.eval_interval == 0 or done == cfg.train.steps:
                scores = self._eval_tokenizer(model, held)
                self._record(log, MetricsRecord(
                    step=done, stage=stage, psnr=scores["psnr"], ssim=scores["ssim"],
                    sem_cosine=scores["sem_cosine"], utilization=scores["utilization"],
                    losses=report.to_dict(),
                ), records)
            if done % cfg.train.checkpoint_interval == 0 and done < cfg.train.steps:
                self._save(stage, modules, done, complete=False, trainer=trainer)
        path = self._save(stage, modules, cfg.train.steps, complete=True)
        return StageResult(stage, path, records, start_step=start)

    def _eval_tokenizer(self, model: DualViTok, held: Sequence[Sample]) -> Dict[str, object]:
        groups: Dict[Tuple[int, int], List[Tensor]] = {}
        for s in held:
            groups.setdefault(s.resolution, []).append(s.image)
        results = [evaluate_tokenizer(model, _stack(images, self.config.device)) for images in groups.values()]
        weights = [len(images) for images in groups.values()]
        total = sum(weights)

        def avg(key: str) -> float:
            return sum(r[key] * w for r, w in zip(results, weights)) / total

        return {
            "psnr": avg("psnr"),
            "ssim": avg("ssim"),
            "sem_cosine": avg("sem_cosine"),
            "utilization": {
                k: sum(r["utilization"][k] * w for r, w in zip(results, weights)) / total
                for k in ("semantic", "pixel")
            },
        }

    # -- diffusion -----------------------------------------------------

    def _run_diffusion(self, stage: str, plan: StagePlan, prerequisite: Optional[Path], log: RunLogger) -> StageResult:
        cfg = self.config
        tokenizer = load_tokenizer(cfg, _tokenizer_source(cfg, stage, prerequisite), self.allow_mismatch, self.monitor)
        decoder = build_diffusion(cfg, tokenizer, plan.learning_rates.get("unet"))
        modules = dict(tokenizer_modules(tokenizer), diffusion=decoder)
        trainer = DiffusionTrainer(
            decoder, tokenizer, cfg.cond_mask, logger=log, collector=TrainingMetricsCollector(), monitor=self.monitor
        )
        start = self._resume(stage, {"diffusion": decoder}, trainer)
        train = stage_samples(cfg, plan, "train")
        held = stage_samples(cfg, plan, "eval")
        batches = _batches(train, cfg.train.batch_size, cfg.seed)
        _advance(batches, start)
        records: List[MetricsRecord] = []

        for step in self._steps(start):
            batch = next(batches)
            loss = trainer.train_step(_stack([s.image for s in batch], cfg.device))
            done = step + 1
            if done % cfg.train.eval_interval == 0 or done == cfg.train.steps:
                first = held[0].resolution
                targets = _stack([s.image for s in held if s.resolution == first], cfg.device)
                scores = evaluate_diffusion(decoder, tokenizer, targets, trainer.source_images(targets), seed=cfg.seed)
                self._record(log, MetricsRecord(
                    step=done, stage=stage, psnr=scores["psnr"], ssim=scores["ssim"],
                    losses={"loss": loss, "sample_mse": scores["mse"]},
                ), records)
            if done % cfg.train.checkpoint_interval == 0 and done < cfg.train.steps:
                self._save(stage, modules, done, complete=False, trainer=trainer)
        path = self._save(stage, modules, cfg.train.steps, complete=True)
        return StageResult(stage, path, records, start_step=start)

    # -- language model ------------------------------------------------

    def _run_lm(self, stage: str, plan: StagePlan, prerequisite: Optional[Path], log: RunLogger) -> StageResult:
        cfg = self.config
        tokenizer = load_tokenizer(cfg, _tokenizer_source(cfg, stage, prerequisite), self.allow_mismatch, self.monitor)
        model = build_lm(cfg)
        if stage != "lm-1":
            load_checkpoint(prerequisite, {"lm": model}, cfg, allow_mismatch=self.allow_mismatch)
        modules = dict(tokenizer_modules(tokenizer), lm=model)
        rates = dict(plan.learning_rates)
        if cfg.train.learning_rate is not None:
            rates = {k: cfg.train.learning_rate for k in rates}
        trainer = LMTrainer(
            model, LM_STAGES[stage], rates, logger=log, collector=TrainingMetricsCollector(), monitor=self.monitor
        )
        start = self._resume(stage, {"lm": model}, trainer)

        train = encode_samples(tokenizer, stage_samples(cfg, plan, "train"), cfg.device)
        held = encode_samples(tokenizer, stage_samples(cfg, plan, "eval"), cfg.device)
        has_edits = all(e.target_tokens is not None for e in train + held)
        task_list = [t for t in plan.tasks if t != "edit" or has_edits]
        tasks = cycle(task_list)
        batches = _batches([e.sample for e in train], cfg.train.batch_size, cfg.seed)
        _advance(tasks, start)
        _advance(batches, start)
        by_sample = {id(e.sample): e for e in train}
        records: List[MetricsRecord] = []

        for step in self._steps(start):
            task = next(tasks)
            batch = [by_sample[id(s)] for s in next(batches)]
            sequences = [build_task_sequence(task, e, cfg, self.codec) for e in batch]
            loss = trainer.train_step(sequences)
            done = step + 1
            if done % cfg.train.eval_interval == 0 or done == cfg.train.steps:
                eval_seqs = [build_task_sequence(t, e, cfg, self.codec) for t in task_list for e in held]
                scores = evaluate_lm(model, eval_seqs)
                self._record(log, MetricsRecord(
                    step=done, stage=stage, losses={"loss": loss, **scores},
                ), records)
            if done % cfg.train.checkpoint_interval == 0 and done < cfg.train.steps:
                self._save(stage, modules, done, complete=False, trainer=trainer)
        path = self._save(stage, modules, cfg.train.steps, complete=True)
        return StageResult(stage, path, records, start_step=start)


def run_stage(
    config: RunConfig,
    stage: str,
    logger: Optional[RunLogger] = None,
    fresh: bool = False,
    allow_mismatch: bool = False,
) -> StageResult:
    """
    Run one stage of ``config``; see StageRunner.

    Raises:
        StageError: If a prerequisite checkpoint is missing
    """
    return StageRunner(config, logger, allow_mismatch=allow_mismatch).run(stage, fresh=fresh)


def run_stages(config: RunConfig, logger: Optional[RunLogger] = None) -> List[StageResult]:
    runner = StageRunner(config, logger, progress=True)
    return [runner.run(stage) for stage in config.stages]
