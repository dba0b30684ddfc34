"""
Harness - run configuration, metrics, checkpoints, stage orchestration,
ablations and the ``tokgen`` command line
"""

from tokgen_module.harness.ablation import AXES, AblationRow, AblationTable, run_ablation, tokenizer_variants
from tokgen_module.harness.checkpoint import (
    CheckpointInfo,
    checkpoint_namespaces,
    load_checkpoint,
    load_extras,
    read_info,
    save_checkpoint,
)
from tokgen_module.harness.config import DataConfig, RunConfig, TrainConfig
from tokgen_module.harness.data import (
    EDIT_OPERATIONS,
    EditTriple,
    EditTriples,
    ImageFolderDataset,
    ShapeSample,
    SyntheticShapes,
    load_image,
    save_image,
)
from tokgen_module.harness.evaluation import evaluate_diffusion, evaluate_lm, evaluate_tokenizer
from tokgen_module.harness.metrics import MetricsRecord, batch_metrics, psnr, ssim
from tokgen_module.harness.reconstruct import ReconstructResult, reconstruct_cli
from tokgen_module.harness.stages import StageResult, StageRunner, resolve_plan, run_stage, run_stages
from tokgen_module.harness.text import ByteTextCodec

__all__ = [
    "AXES",
    "AblationRow",
    "AblationTable",
    "run_ablation",
    "tokenizer_variants",
    "CheckpointInfo",
    "checkpoint_namespaces",
    "load_checkpoint",
    "load_extras",
    "read_info",
    "save_checkpoint",
    "DataConfig",
    "RunConfig",
    "TrainConfig",
    "EDIT_OPERATIONS",
    "EditTriple",
    "EditTriples",
    "ImageFolderDataset",
    "ShapeSample",
    "SyntheticShapes",
    "load_image",
    "save_image",
    "evaluate_diffusion",
    "evaluate_lm",
    "evaluate_tokenizer",
    "MetricsRecord",
    "batch_metrics",
    "psnr",
    "ssim",
    "ReconstructResult",
    "reconstruct_cli",
    "StageResult",
    "StageRunner",
    "resolve_plan",
    "run_stage",
    "run_stages",
    "ByteTextCodec",
]
