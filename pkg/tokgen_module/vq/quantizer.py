"""
Nearest-code assignment, grid quantization and the straight-through estimator
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

from tokgen_module.core.errors import DomainError
from tokgen_module.vq.codebook import Codebook

# Upper bound on elements of one (positions x K x D) difference block.
_DISTANCE_BLOCK = 1 << 24


@dataclass
class QuantizeResult:
    """
    Output of quantize_grid.

    indices has the feature grid's shape without the trailing D;
    quantized[..., :] is exactly the effective code at indices[...].
    """

    indices: Tensor
    quantized: Tensor
    commitment_loss: Tensor
    codebook_loss: Tensor


def squared_distances(vectors: Tensor, codes: Tensor) -> Tensor:
    """
    Exact squared Euclidean distances, (N, D) x (K, D) -> (N, K).

    Computed as sum((v - c)^2) rather than the expanded |v|^2 + |c|^2 - 2vc
    form so equal distances stay exactly equal and ties resolve by index.
    """
    n, d = vectors.shape
    k = codes.shape[0]
    chunk = max(1, _DISTANCE_BLOCK // max(1, k * d))
    out = vectors.new_empty(n, k)
    for start in range(0, n, chunk):
        block = vectors[start:start + chunk]
        out[start:start + chunk] = ((block[:, None, :] - codes[None, :, :]) ** 2).sum(-1)
    return out


def _check_finite(tensor: Tensor, what: str) -> None:
    if not bool(torch.isfinite(tensor).all()):
        raise DomainError(f"{what} contains non-finite values")


def nearest_code(codebook: Codebook, v: Tensor) -> int:
    """
    Index of the code closest to v; ties go to the smallest index.

    Args:
        codebook: Codebook to search
        v: Vector of shape (D,)

    Raises:
        DomainError: If v is not finite or has the wrong dimension
    """
    v = torch.as_tensor(v)
    if v.ndim != 1 or v.shape[0] != codebook.dim:
        raise DomainError(
            f"expected a vector of dim {codebook.dim}, got shape {tuple(v.shape)}"
        )
    _check_finite(v, "input vector")
    with torch.no_grad():
        codes = codebook.effective()
        dtype = torch.promote_types(v.dtype, codes.dtype)
        dists = squared_distances(v.to(dtype)[None, :], codes.to(dtype))[0]
    # argmin returns the first minimal index
    return int(torch.argmin(dists).item())


def quantize_grid(codebook: Codebook, features: Tensor) -> QuantizeResult:
    """
    Quantize a channel-last grid of feature vectors.

    Args:
        codebook: Codebook to quantize against
        features: Tensor of shape (..., D), e.g. (h, w, D) or (B, h, w, D)

    Returns:
        QuantizeResult; codebook_loss pulls codes toward (detached) features,
        commitment_loss pulls features toward (detached) codes.

    Raises:
        DomainError: On D mismatch or non-finite features
    """
    if features.shape[-1] != codebook.dim:
        raise DomainError(
            f"feature dim {features.shape[-1]} does not match codebook dim {codebook.dim}"
        )
    _check_finite(features, "features")

    codes = codebook.effective()
    flat = features.reshape(-1, codebook.dim)
    with torch.no_grad():
        dists = squared_distances(flat.detach(), codes.detach().to(flat.dtype))
        indices = torch.argmin(dists, dim=1)
    quantized = F.embedding(indices, codes.to(features.dtype))

    codebook_loss = F.mse_loss(quantized, flat.detach())
    commitment_loss = F.mse_loss(flat, quantized.detach())

    grid_shape = features.shape[:-1]
    return QuantizeResult(
        indices=indices.reshape(grid_shape),
        quantized=quantized.reshape(features.shape),
        commitment_loss=commitment_loss,
        codebook_loss=codebook_loss,
    )


class _StraightThrough(torch.autograd.Function):
    """Forward: the quantized values. Backward: identity into the features."""

    @staticmethod
    def forward(ctx, features: Tensor, quantized: Tensor) -> Tensor:
        return quantized.clone()

    @staticmethod
    def backward(ctx, grad_output: Tensor):
        return grad_output, None


def straight_through(features: Tensor, quantized: Tensor) -> Tensor:
    """
    Straight-through estimator.

    The forward value is bitwise equal to ``quantized``; the gradient of any
    downstream scalar with respect to ``features`` equals its gradient with
    respect to the returned tensor. No gradient reaches ``quantized`` here;
    codes train through QuantizeResult.codebook_loss.

    Raises:
        DomainError: If the shapes differ
    """
    if features.shape != quantized.shape:
        raise DomainError(
            f"shape mismatch: features {tuple(features.shape)} "
            f"vs quantized {tuple(quantized.shape)}"
        )
    return _StraightThrough.apply(features, quantized)
