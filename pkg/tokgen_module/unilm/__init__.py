"""
Unified autoregressive model - continuous-input adapters, one output head
over the unified vocabulary, guided and grammar-constrained sampling
"""

from tokgen_module.unilm.config import (
    BYTE_TEXT_VOCAB,
    MASK_TEXT_ID,
    GenerationParams,
    ModelConfig,
)
from tokgen_module.unilm.model import CausalBlock, KVCache, UnifiedLM, next_token_loss
from tokgen_module.unilm.sampling import (
    cfg_logits,
    edit_image,
    generate_image,
    generate_image_tokens,
    restrict_logits,
    sample_image_tokens,
    top_k_filter,
)
from tokgen_module.unilm.sequence import MultimodalSequence, SequenceBuilder
from tokgen_module.unilm.trainer import REFERENCE_LEARNING_RATES, LMStage, LMTrainer

__all__ = [
    "BYTE_TEXT_VOCAB",
    "MASK_TEXT_ID",
    "GenerationParams",
    "ModelConfig",
    "CausalBlock",
    "KVCache",
    "UnifiedLM",
    "next_token_loss",
    "cfg_logits",
    "edit_image",
    "generate_image",
    "generate_image_tokens",
    "restrict_logits",
    "sample_image_tokens",
    "top_k_filter",
    "MultimodalSequence",
    "SequenceBuilder",
    "REFERENCE_LEARNING_RATES",
    "LMStage",
    "LMTrainer",
]
