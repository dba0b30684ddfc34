"""
Dual-branch vision tokenizer - semantic and pixel branches, noise
injection, the loss stack and the training loop
"""

from tokgen_module.tokenizer.config import (
    BranchMode,
    LossWeights,
    NoiseKind,
    NoiseSpec,
    TokenizerConfig,
)
from tokgen_module.tokenizer.losses import (
    LossReport,
    PatchDiscriminator,
    cosine_similarity,
    hinge_d_loss,
    hinge_g_loss,
    perceptual_loss,
    semantic_loss,
)
from tokgen_module.tokenizer.model import DualViTok, ForwardPass, TokenizerOutput
from tokgen_module.tokenizer.noise import NoiseMask, inject_noise, noise_mask
from tokgen_module.tokenizer.pixel import PixelDecoder, PixelEncoder
from tokgen_module.tokenizer.semantic import SemanticBackbone, SemanticDecoder
from tokgen_module.tokenizer.trainer import TokenizerTrainer

__all__ = [
    "BranchMode",
    "LossWeights",
    "NoiseKind",
    "NoiseSpec",
    "TokenizerConfig",
    "LossReport",
    "PatchDiscriminator",
    "cosine_similarity",
    "hinge_d_loss",
    "hinge_g_loss",
    "perceptual_loss",
    "semantic_loss",
    "DualViTok",
    "ForwardPass",
    "TokenizerOutput",
    "NoiseMask",
    "inject_noise",
    "noise_mask",
    "PixelEncoder",
    "PixelDecoder",
    "SemanticBackbone",
    "SemanticDecoder",
    "TokenizerTrainer",
]
