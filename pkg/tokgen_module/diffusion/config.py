"""
Diffusion decoder configuration and conditioning-mask policy
"""

from __future__ import annotations

from dataclasses import dataclass

from tokgen_module.core.errors import ConfigError


@dataclass
class DiffusionConfig:
    """
    Pixel-space DDPM that reconstructs and 2x-upscales images from tokens.

    Betas rise linearly from ``beta_start`` to ``beta_end`` over
    ``timesteps`` steps.
    """

    timesteps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    width: int = 64
    levels: int = 3
    time_dim: int = 128
    upscale: int = 2
    learning_rate: float = 2e-4
    seed: int = 0

    def __post_init__(self):
        if self.timesteps <= 0:
            raise ConfigError("timesteps must be positive")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1")
        if self.width <= 0 or self.levels <= 0 or self.time_dim <= 0:
            raise ConfigError("width, levels and time_dim must be positive")
        if self.time_dim % 2:
            raise ConfigError("time_dim must be even")
        if self.upscale != 2:
            raise ConfigError("upscale factor is fixed at 2")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    @property
    def spatial_multiple(self) -> int:
        """Working-resolution sides must be multiples of this."""
        return 2 ** (self.levels - 1)

    @classmethod
    def desk(cls) -> "DiffusionConfig":
        return cls()

    @classmethod
    def reference(cls) -> "DiffusionConfig":
        """Desk network with the reference learning rate."""
        return cls(learning_rate=2e-5)

    @classmethod
    def tiny(cls) -> "DiffusionConfig":
        return cls(timesteps=8, width=16, levels=2, time_dim=32)


@dataclass(frozen=True)
class CondMaskSpec:
    """
    Training-time corruption of the token condition.

    A sample is token-perturbed with probability ``sample_perturb_prob``,
    in which case each id is replaced uniformly with probability
    ``token_replace_prob``. Independently, the semantic and pixel feature
    maps of a sample are replaced by their null embeddings with
    ``sem_mask_prob`` and ``pix_mask_prob``.
    """

    sample_perturb_prob: float = 0.5
    token_replace_prob: float = 0.1
    sem_mask_prob: float = 0.1
    pix_mask_prob: float = 0.5

    def __post_init__(self):
        for name in ("sample_perturb_prob", "token_replace_prob", "sem_mask_prob", "pix_mask_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")

    @classmethod
    def reference(cls) -> "CondMaskSpec":
        return cls()

    @classmethod
    def disabled(cls) -> "CondMaskSpec":
        return cls(0.0, 0.0, 0.0, 0.0)
