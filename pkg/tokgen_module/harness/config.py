"""
Run configuration

A RunConfig nests every module's config plus run-level settings and is
read from / written to JSON. Unknown keys are rejected at every level.

Example:
    config = RunConfig.load("configs/desk.json")
    config = RunConfig.from_dict({"seed": 1, "train": {"steps": 100}})
    print(config.structural_hash())
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from tokgen_module.core.config_loader import from_mapping, to_mapping
from tokgen_module.core.errors import ConfigError
from tokgen_module.datapipe.stages import STAGE_ORDER
from tokgen_module.diffusion.config import CondMaskSpec, DiffusionConfig
from tokgen_module.seqcodec.layout import VocabLayout
from tokgen_module.telemetry.log_level import LogLevel
from tokgen_module.tokenizer.config import TokenizerConfig
from tokgen_module.unilm.config import GenerationParams, ModelConfig

# Fields that change parameter shapes or meaning; training knobs are excluded.
_TOKENIZER_STRUCTURE = (
    "sem_downsample", "pix_downsample", "sem_codebook_size", "pix_codebook_size",
    "codebook_dim", "quantizer", "backbone_dim", "backbone_blocks", "backbone_heads",
    "backbone_seed", "sem_decoder_blocks", "enc_channels", "dec_channels", "dc_block",
    "branch", "disc_channels",
)
_DIFFUSION_STRUCTURE = ("timesteps", "beta_start", "beta_end", "width", "levels", "time_dim", "upscale")


@dataclass
class TrainConfig:
    """Step budgets and intervals shared by every stage."""

    steps: int = 2000
    batch_size: int = 8
    eval_interval: int = 200
    checkpoint_interval: int = 500
    eval_images: int = 16
    learning_rate: Optional[float] = None
    stage_preset: str = "desk"

    def __post_init__(self):
        for name in ("steps", "batch_size", "eval_interval", "checkpoint_interval", "eval_images"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name} must be positive")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("train.learning_rate must be positive")
        if self.stage_preset not in ("desk", "reference"):
            raise ConfigError(f"train.stage_preset must be 'desk' or 'reference', got {self.stage_preset!r}")


@dataclass
class DataConfig:
    """Where images come from."""

    kind: str = "synthetic"
    folder: Optional[str] = None
    image_size: int = 32
    count: int = 256
    held_out: int = 16
    edit_instruction: str = "invert colors"

    def __post_init__(self):
        if self.kind not in ("synthetic", "folder"):
            raise ConfigError(f"data.kind must be 'synthetic' or 'folder', got {self.kind!r}")
        if self.kind == "folder" and not self.folder:
            raise ConfigError("data.folder is required when data.kind is 'folder'")
        if self.image_size <= 0 or self.count <= 0 or self.held_out < 0:
            raise ConfigError("data sizes must be positive")


@dataclass
class RunConfig:
    seed: int = 0
    device: str = "cpu"
    output_dir: str = "runs/default"
    stages: Tuple[str, ...] = STAGE_ORDER
    log_level: str = "INFO"
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig.desk)
    lm: ModelConfig = field(default_factory=ModelConfig.desk)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig.desk)
    cond_mask: CondMaskSpec = field(default_factory=CondMaskSpec.reference)
    generation: GenerationParams = field(default_factory=GenerationParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        unknown = [s for s in self.stages if s not in STAGE_ORDER]
        if unknown:
            raise ConfigError(f"unknown stage(s) {', '.join(unknown)}")
        try:
            LogLevel.from_string(self.log_level)
        except ValueError as exc:
            raise ConfigError(f"log_level: {exc}") from exc
        dim = self.tokenizer.codebook_dim
        if self.lm.sem_feature_dim != dim or self.lm.pix_feature_dim != dim:
            raise ConfigError(
                f"lm feature dims ({self.lm.sem_feature_dim}, {self.lm.pix_feature_dim}) "
                f"must equal tokenizer.codebook_dim {dim}"
            )
        m = self.tokenizer.lcm_multiple
        if self.data.image_size % m:
            raise ConfigError(f"data.image_size must be a multiple of {m}")

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def layout(self) -> VocabLayout:
        tok = self.tokenizer
        return self.lm.layout_for(tok.sem_codebook_size, tok.pix_codebook_size, tok.pixel_ratio)

    # -- presets -------------------------------------------------------

    @classmethod
    def desk(cls) -> "RunConfig":
        return cls()

    @classmethod
    def tiny(cls, output_dir: str = "runs/tiny") -> "RunConfig":
        """Seconds-scale run for tests and smoke checks."""
        return cls(
            output_dir=output_dir,
            tokenizer=TokenizerConfig.tiny(),
            lm=ModelConfig.tiny(),
            diffusion=DiffusionConfig.tiny(),
            train=TrainConfig(steps=4, batch_size=2, eval_interval=2, checkpoint_interval=2, eval_images=2),
            data=DataConfig(image_size=16, count=8, held_out=2),
        )

    # -- serialisation -------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        return from_mapping(cls, data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return to_mapping(self)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path

    def structure(self) -> Dict[str, Any]:
        """The architecture-defining subset of the configuration."""
        tok = to_mapping(self.tokenizer)
        diff = to_mapping(self.diffusion)
        return {
            "tokenizer": {k: tok[k] for k in _TOKENIZER_STRUCTURE},
            "lm": to_mapping(self.lm),
            "diffusion": {k: diff[k] for k in _DIFFUSION_STRUCTURE},
            "layout": self.layout().to_dict(),
        }

    def structural_hash(self) -> str:
        canonical = json.dumps(self.structure(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
