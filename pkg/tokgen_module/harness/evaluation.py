"""
Evaluation loops for the tokenizer, the unified model and the diffusion decoder
"""

from __future__ import annotations

from typing import Dict, Optional, Sequence

import torch
from torch import Tensor

from tokgen_module.diffusion.decoder import DiffusionDecoder
from tokgen_module.harness.metrics import batch_metrics
from tokgen_module.telemetry.monitor import Monitor
from tokgen_module.tokenizer.config import NoiseSpec
from tokgen_module.tokenizer.losses import cosine_similarity
from tokgen_module.tokenizer.model import DualViTok
from tokgen_module.unilm.model import UnifiedLM, next_token_loss
from tokgen_module.unilm.sequence import MultimodalSequence
from tokgen_module.vq.utilization import utilization


@torch.no_grad()
def evaluate_tokenizer(
    model: DualViTok,
    images: Tensor,
    noise: Optional[NoiseSpec] = None,
    seed: int = 0,
    window: int = 7,
    monitor: Optional[Monitor] = None,
) -> Dict[str, object]:
    """
    PSNR, SSIM, semantic cosine and codebook utilizations on a batch.

    Reconstructions go through encode -> (optional noise) -> decode, the
    same path as ``reconstruct``. Utilizations are also recorded as the
    ``util_semantic`` and ``util_pixel`` gauges on ``monitor`` (the
    model's by default).
    """
    model.eval()
    recon = model.reconstruct(images, noise=noise, seed=seed)
    scores = batch_metrics(images.cpu(), recon.cpu(), window=window)
    out = model(images, quantize=True)
    cos, _ = cosine_similarity(out.sem_reconstruction, out.sem_target)
    encoded = model.encode(images)
    used = {
        "semantic": utilization([encoded.sem_indices], model.codebook_sem.size).utilization,
        "pixel": utilization([encoded.pix_indices], model.codebook_pix.size).utilization,
    }
    monitor = monitor or model.monitor
    for branch, value in used.items():
        monitor.record_gauge(f"util_{branch}", value)
    return {
        "psnr": scores["psnr"],
        "ssim": scores["ssim"],
        "sem_cosine": float(cos.mean().item()),
        "utilization": used,
    }


@torch.no_grad()
def evaluate_lm(model: UnifiedLM, sequences: Sequence[MultimodalSequence]) -> Dict[str, float]:
    """Held-out next-token loss and exact-match accuracy over supervised positions."""
    model.eval()
    loss = next_token_loss(model, sequences)
    embeddings, _ = model.embed_batch(sequences)
    logits = model(embeddings)
    correct = total = 0
    for i, seq in enumerate(sequences):
        n = len(seq)
        mask = seq.loss_mask[1:n].to(logits.device)
        predicted = logits[i, : n - 1].argmax(-1)
        target = seq.tokens[1:n].to(logits.device)
        correct += int(((predicted == target) & mask).sum().item())
        total += int(mask.sum().item())
    return {"eval_loss": float(loss.item()), "token_accuracy": correct / max(total, 1)}


@torch.no_grad()
def evaluate_diffusion(
    decoder: DiffusionDecoder,
    tokenizer: DualViTok,
    targets: Tensor,
    sources: Tensor,
    seed: int = 0,
    window: int = 7,
) -> Dict[str, float]:
    """Sample 2x reconstructions from the tokens of ``sources`` and score them against ``targets``."""
    tokenizer.eval()
    tokens = tokenizer.encode(sources)
    samples = decoder.sample(tokens.sem_indices, tokens.pix_indices, seed=seed)
    scores = batch_metrics(targets.cpu(), samples.cpu(), window=window)
    scores["mse"] = float(torch.mean((targets.cpu() - samples.cpu()) ** 2).item())
    return scores
