"""
Classifier-free guided, grammar-constrained image sampling
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import torch
from torch import Tensor

from tokgen_module.core.errors import DomainError
from tokgen_module.seqcodec.block import ImageTokenBlock
from tokgen_module.seqcodec.grammar import GrammarState, parse
from tokgen_module.unilm.config import GenerationParams
from tokgen_module.unilm.model import UnifiedLM
from tokgen_module.unilm.sequence import MultimodalSequence, SequenceBuilder


def cfg_logits(cond: Tensor, uncond: Tensor, scale: float) -> Tensor:
    """
    uncond + s * (cond - uncond), evaluated as (1 - s) * uncond + s * cond
    so s = 1 gives cond and s = 0 gives uncond exactly.

    Raises:
        DomainError: If the shapes differ
    """
    cond = torch.as_tensor(cond)
    uncond = torch.as_tensor(uncond)
    if cond.shape != uncond.shape:
        raise DomainError(f"logit shapes differ: {tuple(cond.shape)} vs {tuple(uncond.shape)}")
    if scale == 1:
        return cond.clone()
    if scale == 0:
        return uncond.clone()
    return (1.0 - scale) * uncond + scale * cond


def restrict_logits(logits: Tensor, ranges: Sequence[Tuple[int, int]]) -> Tensor:
    """-inf outside the allowed id intervals."""
    allowed = torch.zeros_like(logits, dtype=torch.bool)
    for lo, hi in ranges:
        allowed[..., lo:hi] = True
    return logits.masked_fill(~allowed, float("-inf"))


def top_k_filter(logits: Tensor, k: int) -> Tensor:
    k = min(k, logits.shape[-1])
    kth = torch.topk(logits, k, dim=-1).values[..., -1:]
    return logits.masked_fill(logits < kth, float("-inf"))


def _required_length(model: UnifiedLM, params: GenerationParams) -> int:
    layout = model.layout
    if params.target is not None:
        return layout.sequence_length(*params.target)
    longest = 0
    for h in range(1, layout.max_height + 1):
        for w in range(1, layout.max_width + 1):
            if layout.valid_side(h) and layout.valid_side(w):
                longest = max(longest, layout.sequence_length(h, w))
    return longest


@torch.no_grad()
def sample_image_tokens(
    model: UnifiedLM,
    cond: MultimodalSequence,
    uncond: Optional[MultimodalSequence],
    params: GenerationParams,
) -> List[int]:
    """
    Sample one image block after the given contexts.

    ``uncond`` must have the same length as ``cond``; it is skipped when
    ``cfg_scale`` is 1.

    Raises:
        DomainError: If context plus the longest admissible block exceeds
            the model context (checked before sampling)
    """
    need = len(cond) + _required_length(model, params)
    if need > model.config.context_length:
        raise DomainError(
            f"context overflow: prompt {len(cond)} + image {need - len(cond)} "
            f"> context {model.config.context_length}"
        )
    if uncond is not None and len(uncond) != len(cond):
        raise DomainError("conditional and unconditional contexts differ in length")

    model.eval()
    guided = params.cfg_scale != 1 and uncond is not None
    contexts = [cond, uncond] if guided else [cond]
    generator = torch.Generator().manual_seed(params.seed)
    state = GrammarState(model.layout, params.target)
    cache = model.new_cache()

    if len(cond):
        embeddings, _ = model.embed_batch(contexts)
        logits = model(embeddings, cache)[:, -1]
    else:
        logits = None

    out: List[int] = []
    device = model.token_embedding.weight.device
    while not state.is_complete:
        if logits is None:
            step_logits = torch.zeros(model.vocab_size, device=device)
        elif guided:
            step_logits = cfg_logits(logits[0], logits[1], params.cfg_scale)
        else:
            step_logits = logits[0]
        step_logits = restrict_logits(step_logits.float(), state.allowed_ranges())
        step_logits = top_k_filter(step_logits / params.temperature, params.top_k)
        probs = torch.softmax(step_logits, dim=-1).cpu()
        token = int(torch.multinomial(probs, 1, generator=generator).item())
        state.advance(token)
        out.append(token)
        if state.is_complete:
            break
        ids = torch.full((len(contexts), 1), token, dtype=torch.long, device=device)
        logits = model(model.token_embedding(ids), cache)[:, -1]
    return out


def generate_image(
    model: UnifiedLM, prompt: Sequence[int], params: GenerationParams
) -> ImageTokenBlock:
    """
    Text-to-image: the unconditional context replaces every prompt id by
    ``mask_text_id``.
    """
    return parse(generate_image_tokens(model, prompt, params), model.layout)


def generate_image_tokens(
    model: UnifiedLM, prompt: Sequence[int], params: GenerationParams
) -> List[int]:
    cond = SequenceBuilder(model.layout).text(prompt).build()
    uncond = cond.masked_text(model.config.mask_text_id, range(len(cond)))
    return sample_image_tokens(model, cond, uncond, params)


def edit_image(
    model: UnifiedLM,
    source,
    instruction: Sequence[int],
    params: GenerationParams,
) -> ImageTokenBlock:
    """
    Image editing from a tokenized source (an unbatched TokenizerOutput).

    Context = source block with continuous features, then the instruction;
    the unconditional context masks only the instruction. The output
    keeps the source's grid size.
    """
    block = ImageTokenBlock(source.sem_indices, source.pix_indices)
    builder = (
        SequenceBuilder(model.layout)
        .image_input(block, source.sem_features, source.pix_features)
        .text(instruction, name="instruction")
    )
    cond = builder.build()
    uncond = cond.masked_text(model.config.mask_text_id, builder.span("instruction"))
    pinned = GenerationParams(
        cfg_scale=params.cfg_scale,
        temperature=params.temperature,
        top_k=params.top_k,
        sem_h=block.sem_h,
        sem_w=block.sem_w,
        seed=params.seed,
    )
    return parse(sample_image_tokens(model, cond, uncond, pinned), model.layout)
