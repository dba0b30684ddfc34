"""
Learnable codebooks for vector quantization

Two parameterizations share one interface:

- vanilla: the K x D code table itself is the trainable parameter.
- simvq: a frozen random base table B (K x D) composed with one trainable
  D x D linear map W; the effective codes are B @ W^T. Gradients reach the
  codes only through W, which keeps every code moving and utilization high.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, Optional, Tuple

import torch
from torch import Tensor, nn

from tokgen_module.core.errors import ConfigError


class QuantizerKind(str, Enum):
    """Codebook parameterization."""

    VANILLA = "vanilla"
    SIMVQ = "simvq"


class Codebook(nn.Module):
    """
    K code vectors of dimension D.

    Args:
        size: Number of codes K
        dim: Code dimension D
        kind: Parameterization (vanilla or simvq)
        seed: Seed for the initial tables; None draws from the global generator

    Example:
        book = Codebook(1024, 32, QuantizerKind.SIMVQ, seed=0)
        codes = book.effective()   # (1024, 32)
    """

    def __init__(
        self,
        size: int,
        dim: int,
        kind: QuantizerKind = QuantizerKind.SIMVQ,
        seed: Optional[int] = None,
    ):
        super().__init__()
        if size <= 0:
            raise ConfigError(f"codebook size must be positive, got {size}")
        if dim <= 0:
            raise ConfigError(f"codebook dim must be positive, got {dim}")
        self.size = size
        self.dim = dim
        self.kind = QuantizerKind(kind)

        generator = None
        if seed is not None:
            generator = torch.Generator().manual_seed(seed)

        if self.kind is QuantizerKind.VANILLA:
            table = torch.empty(size, dim).uniform_(
                -1.0 / size, 1.0 / size, generator=generator
            )
            self.embedding = nn.Parameter(table)
        else:
            base = torch.randn(size, dim, generator=generator) * dim ** -0.5
            # buffer, not parameter: no optimizer ever sees it
            self.register_buffer("base", base)
            proj = nn.Linear(dim, dim, bias=False)
            bound = dim ** -0.5
            with torch.no_grad():
                proj.weight.uniform_(-bound, bound, generator=generator)
            self.proj = proj

    def effective(self) -> Tensor:
        """Effective code table, shape (K, D), differentiable w.r.t. trainable parts."""
        if self.kind is QuantizerKind.VANILLA:
            return self.embedding
        return self.proj(self.base)

    def lookup(self, indices: Tensor) -> Tensor:
        """Code vectors for an integer tensor of any shape; output adds a trailing D."""
        return nn.functional.embedding(indices, self.effective())

    def to_named_arrays(self) -> Tuple[Dict[str, Tensor], Dict[str, str]]:
        """
        Checkpoint form: arrays plus string metadata.

        Returns:
            (arrays, metadata) where arrays holds "effective" and, for simvq,
            "base" and "proj"; metadata records the kind tag and sizes.
        """
        with torch.no_grad():
            arrays = {"effective": self.effective().detach().clone().contiguous()}
            if self.kind is QuantizerKind.SIMVQ:
                arrays["base"] = self.base.detach().clone().contiguous()
                arrays["proj"] = self.proj.weight.detach().clone().contiguous()
        metadata = {"kind": self.kind.value, "size": str(self.size), "dim": str(self.dim)}
        return arrays, metadata

    @classmethod
    def from_named_arrays(
        cls, arrays: Dict[str, Tensor], metadata: Dict[str, str]
    ) -> "Codebook":
        book = cls(int(metadata["size"]), int(metadata["dim"]), QuantizerKind(metadata["kind"]))
        with torch.no_grad():
            if book.kind is QuantizerKind.VANILLA:
                book.embedding.copy_(arrays["effective"])
            else:
                book.base.copy_(arrays["base"])
                book.proj.weight.copy_(arrays["proj"])
        return book

    def extra_repr(self) -> str:
        return f"size={self.size}, dim={self.dim}, kind={self.kind.value}"
