"""
BSD 3-Clause License

Python Token Generation System - a desk-scale unified multimodal stack:
dual semantic/pixel image tokenizer, coarse-to-fine token grammar,
autoregressive unified model, token-conditioned diffusion decoder and the
resolution-flexible data pipeline
"""

__version__ = "0.1.0"
__author__ = "kcenon"
__email__ = "kcenon@naver.com"

from tokgen_module.core.errors import (
    CheckpointMismatchError,
    ConfigError,
    DivergenceError,
    DomainError,
    ParseError,
    ParseErrorKind,
    StageError,
    TokgenError,
)
from tokgen_module.harness.config import RunConfig
from tokgen_module.seqcodec.layout import VocabLayout, layout_build
from tokgen_module.tokenizer.config import TokenizerConfig
from tokgen_module.tokenizer.model import DualViTok
from tokgen_module.unilm.config import ModelConfig
from tokgen_module.unilm.model import UnifiedLM

# Import submodules (not all classes by default)
from tokgen_module import datapipe
from tokgen_module import diffusion
from tokgen_module import harness
from tokgen_module import seqcodec
from tokgen_module import telemetry
from tokgen_module import tokenizer
from tokgen_module import unilm
from tokgen_module import vq

__all__ = [
    "CheckpointMismatchError",
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "ParseError",
    "ParseErrorKind",
    "StageError",
    "TokgenError",
    "RunConfig",
    "VocabLayout",
    "layout_build",
    "TokenizerConfig",
    "DualViTok",
    "ModelConfig",
    "UnifiedLM",
    "datapipe",
    "diffusion",
    "harness",
    "seqcodec",
    "telemetry",
    "tokenizer",
    "unilm",
    "vq",
]
