"""
Vector quantization - codebooks (vanilla and SimVQ), nearest-code search,
straight-through gradients and utilization accounting
"""

from tokgen_module.vq.codebook import Codebook, QuantizerKind
from tokgen_module.vq.quantizer import (
    QuantizeResult,
    nearest_code,
    quantize_grid,
    squared_distances,
    straight_through,
)
from tokgen_module.vq.utilization import (
    UtilizationReport,
    UtilizationTracker,
    utilization,
)

__all__ = [
    "Codebook",
    "QuantizerKind",
    "QuantizeResult",
    "nearest_code",
    "quantize_grid",
    "squared_distances",
    "straight_through",
    "UtilizationReport",
    "UtilizationTracker",
    "utilization",
]
