"""
Dual tokenizer configuration

Presets cover the full-size reference configuration and the desk-scale
configuration used for training on one accelerator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from tokgen_module.core.errors import ConfigError
from tokgen_module.vq.codebook import QuantizerKind


class NoiseKind(str, Enum):
    """Token perturbation policy."""

    NONE = "none"
    RANDOM = "random"
    ZERO = "zero"


class BranchMode(str, Enum):
    """Which token branches feed the decoders."""

    DUAL = "dual"
    SEMANTIC = "semantic"
    PIXEL = "pixel"


@dataclass(frozen=True)
class NoiseSpec:
    """
    Perturbation applied to token grids during tokenizer training.

    With probability alpha a sample is perturbed; in a perturbed sample each
    token is independently replaced with probability beta.
    """

    kind: NoiseKind = NoiseKind.NONE
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", NoiseKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown noise kind {self.kind!r}") from None
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"noise {name} must be in [0, 1], got {value}")

    @property
    def active(self) -> bool:
        return self.kind is not NoiseKind.NONE and self.alpha > 0 and self.beta > 0

    @classmethod
    def off(cls) -> "NoiseSpec":
        return cls()

    @classmethod
    def reference(cls) -> "NoiseSpec":
        """Random replacement, alpha = beta = 10%."""
        return cls(NoiseKind.RANDOM, 0.1, 0.1)

    def label(self) -> str:
        if self.kind is NoiseKind.NONE:
            return "none"
        return f"{self.kind.value}(a={self.alpha:g},b={self.beta:g})"


@dataclass
class LossWeights:
    """Weights of the tokenizer loss stack."""

    cosine: float = 1.0
    l1: float = 1.0
    perceptual: float = 0.5
    gan: float = 0.1
    commitment: float = 0.25

    def __post_init__(self):
        for name in ("cosine", "l1", "perceptual", "gan", "commitment"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be non-negative")


@dataclass
class TokenizerConfig:
    """
    Architecture and training settings of the dual tokenizer.

    Sizes follow the desk preset by default; ``reference()`` returns the
    reference sizes.
    """

    sem_downsample: int = 8
    pix_downsample: int = 4
    sem_codebook_size: int = 1024
    pix_codebook_size: int = 4096
    codebook_dim: int = 32
    quantizer: QuantizerKind = QuantizerKind.SIMVQ

    backbone_dim: int = 64
    backbone_blocks: int = 2
    backbone_heads: int = 4
    backbone_seed: int = 1234
    sem_decoder_blocks: int = 2

    enc_channels: int = 32
    dec_channels: int = 64
    dc_block: bool = True
    branch: BranchMode = BranchMode.DUAL

    noise: NoiseSpec = field(default_factory=NoiseSpec.reference)
    noise_semantic: bool = True
    noise_pixel: bool = True

    loss_weights: LossWeights = field(default_factory=LossWeights)
    gan_start_fraction: float = 2.0 / 3.0
    disc_channels: int = 32
    learning_rate: float = 4e-4
    disc_learning_rate: float = 4e-4
    seed: int = 0

    def __post_init__(self):
        for name in (
            "sem_downsample", "pix_downsample", "sem_codebook_size",
            "pix_codebook_size", "codebook_dim", "backbone_dim",
            "backbone_blocks", "backbone_heads", "sem_decoder_blocks",
            "enc_channels", "dec_channels", "disc_channels",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        f_p = self.pix_downsample
        if f_p < 2 or f_p & (f_p - 1):
            raise ConfigError(f"pix_downsample must be a power of two >= 2, got {f_p}")
        if self.backbone_dim % self.backbone_heads:
            raise ConfigError("backbone_dim must be divisible by backbone_heads")
        if (self.backbone_dim // self.backbone_heads) % 4:
            raise ConfigError("attention head dim must be divisible by 4 for 2D rotary encoding")
        if not 0.0 <= self.gan_start_fraction <= 1.0:
            raise ConfigError("gan_start_fraction must be in [0, 1]")
        if self.learning_rate <= 0 or self.disc_learning_rate <= 0:
            raise ConfigError("learning rates must be positive")
        self.quantizer = QuantizerKind(self.quantizer)
        self.branch = BranchMode(self.branch)

    @property
    def lcm_multiple(self) -> int:
        """Image sides must be multiples of this."""
        return self.sem_downsample * self.pix_downsample // math.gcd(
            self.sem_downsample, self.pix_downsample
        )

    @property
    def pixel_ratio(self) -> Fraction:
        """Pixel grid side / semantic grid side."""
        return Fraction(self.sem_downsample, self.pix_downsample)

    @property
    def pixel_stages(self) -> int:
        return int(math.log2(self.pix_downsample))

    @classmethod
    def desk(cls) -> "TokenizerConfig":
        return cls()

    @classmethod
    def reference(cls) -> "TokenizerConfig":
        """Reference sizes: 28x semantic / 16x pixel downsampling, 32k / 98k codes."""
        return cls(
            sem_downsample=28,
            pix_downsample=16,
            sem_codebook_size=32768,
            pix_codebook_size=98304,
            codebook_dim=32,
            backbone_dim=256,
            backbone_blocks=4,
            backbone_heads=8,
            sem_decoder_blocks=4,
            enc_channels=128,
            dec_channels=384,
            learning_rate=1e-4,
            disc_learning_rate=1e-4,
        )

    @classmethod
    def tiny(cls) -> "TokenizerConfig":
        """Smallest useful configuration, for unit tests."""
        return cls(
            sem_codebook_size=64,
            pix_codebook_size=128,
            codebook_dim=8,
            backbone_dim=32,
            backbone_blocks=1,
            backbone_heads=2,
            sem_decoder_blocks=1,
            enc_channels=8,
            dec_channels=16,
            disc_channels=8,
        )
