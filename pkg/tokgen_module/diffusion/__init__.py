"""
Token-conditioned diffusion decoder - conditioning, noise schedule,
UNet, training and 2x sampling
"""

from tokgen_module.diffusion.conditioning import ConditionEmbedder, ConditionMask, mask_condition
from tokgen_module.diffusion.config import CondMaskSpec, DiffusionConfig
from tokgen_module.diffusion.decoder import DiffusionDecoder, DiffusionTrainer
from tokgen_module.diffusion.schedule import NoiseSchedule
from tokgen_module.diffusion.unet import ConditionalUNet, timestep_embedding

__all__ = [
    "ConditionEmbedder",
    "ConditionMask",
    "mask_condition",
    "CondMaskSpec",
    "DiffusionConfig",
    "DiffusionDecoder",
    "DiffusionTrainer",
    "NoiseSchedule",
    "ConditionalUNet",
    "timestep_embedding",
]
