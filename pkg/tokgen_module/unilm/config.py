"""
Unified language model configuration and generation parameters
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from tokgen_module.core.errors import ConfigError
from tokgen_module.seqcodec.layout import VocabLayout

# Byte-level toy text vocabulary: 256 bytes + <bos> <eos> <pad> <mask_text>
BYTE_TEXT_VOCAB = 260
MASK_TEXT_ID = 259


@dataclass
class ModelConfig:
    """
    Transformer sizes and the text side of the vocabulary.

    The image side of the vocabulary (codebook sizes, pixel ratio) comes
    from the tokenizer; see ``layout_for``.
    """

    layers: int = 8
    heads: int = 8
    dim: int = 512
    context_length: int = 1536
    mlp_ratio: int = 4
    text_vocab_size: int = BYTE_TEXT_VOCAB
    mask_text_id: int = MASK_TEXT_ID
    max_height: int = 16
    max_width: int = 16
    sem_feature_dim: int = 32
    pix_feature_dim: int = 32
    adapter_hidden: int = 512
    continuous_input: bool = True

    def __post_init__(self):
        for name in (
            "layers", "heads", "dim", "context_length", "mlp_ratio", "text_vocab_size",
            "max_height", "max_width", "sem_feature_dim", "pix_feature_dim", "adapter_hidden",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.dim % self.heads:
            raise ConfigError("dim must be divisible by heads")
        if not 0 <= self.mask_text_id < self.text_vocab_size:
            raise ConfigError("mask_text_id must be a text id")

    def layout_for(
        self, sem_codebook_size: int, pix_codebook_size: int, pixel_ratio
    ) -> VocabLayout:
        return VocabLayout(
            self.text_vocab_size,
            sem_codebook_size,
            pix_codebook_size,
            self.max_height,
            self.max_width,
            pixel_ratio=pixel_ratio,
        )

    @classmethod
    def desk(cls) -> "ModelConfig":
        return cls()

    @classmethod
    def tiny(cls) -> "ModelConfig":
        """Two layers, width 32; for unit tests."""
        return cls(
            layers=2,
            heads=2,
            dim=32,
            context_length=256,
            max_height=4,
            max_width=4,
            sem_feature_dim=8,
            pix_feature_dim=8,
            adapter_hidden=32,
        )


@dataclass
class GenerationParams:
    """
    Sampling controls.

    ``sem_h``/``sem_w`` pin the height and width indicators; when unset the
    model chooses them under the grammar.
    """

    cfg_scale: float = 2.0
    temperature: float = 1.0
    top_k: int = 50
    sem_h: Optional[int] = None
    sem_w: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.cfg_scale < 0:
            raise ConfigError("cfg_scale must be >= 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if (self.sem_h is None) != (self.sem_w is None):
            raise ConfigError("sem_h and sem_w must be given together")

    @property
    def target(self) -> Optional[Tuple[int, int]]:
        if self.sem_h is None:
            return None
        return (self.sem_h, self.sem_w)
