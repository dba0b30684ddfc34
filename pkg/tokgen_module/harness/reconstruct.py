"""
Single-image reconstruction through a trained tokenizer
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import torch.nn.functional as F

from tokgen_module.harness.config import RunConfig
from tokgen_module.harness.data import load_image, save_image
from tokgen_module.harness.metrics import MetricsRecord, psnr, ssim
from tokgen_module.harness.stages import load_tokenizer
from tokgen_module.telemetry.run_logger import RunLogger, get_logger
from tokgen_module.tokenizer.config import NoiseSpec


@dataclass
class ReconstructResult:
    output: Path
    record: MetricsRecord


def _round_to(n: int, m: int) -> int:
    return max(m, int(round(n / m)) * m)


def reconstruct_cli(
    image_path: Union[str, Path],
    checkpoint: Union[str, Path],
    config: RunConfig,
    noise: Optional[NoiseSpec] = None,
    output: Optional[Union[str, Path]] = None,
    seed: int = 0,
    allow_mismatch: bool = False,
    logger: Optional[RunLogger] = None,
) -> ReconstructResult:
    """
    encode -> optional noise -> decode one image file.

    Images whose sides are not multiples of the tokenizer's multiple are
    resized to the nearest multiple for tokenization and back afterwards,
    so the output always has the input's size.

    Raises:
        DomainError: If the image cannot be read
    """
    logger = logger or get_logger()
    image = load_image(image_path)
    model = load_tokenizer(config, Path(checkpoint), allow_mismatch=allow_mismatch)
    device = next(model.parameters()).device

    height, width = image.shape[1:]
    m = config.tokenizer.lcm_multiple
    work_h, work_w = _round_to(height, m), _round_to(width, m)
    source = image.unsqueeze(0)
    if (work_h, work_w) != (height, width):
        source = F.interpolate(source, size=(work_h, work_w), mode="bilinear", antialias=True, align_corners=False)
    recon = model.reconstruct(source.to(device), noise=noise, seed=seed).cpu()
    if (work_h, work_w) != (height, width):
        recon = F.interpolate(recon, size=(height, width), mode="bilinear", antialias=True, align_corners=False)
    recon = recon[0].clamp(0, 1)

    window = min(7, height, width)
    record = MetricsRecord(
        step=0,
        stage="reconstruct",
        psnr=psnr(image, recon),
        ssim=ssim(image, recon, window=window),
        extra={
            "image": str(image_path),
            "checkpoint": str(checkpoint),
            "noise": noise.label() if noise is not None else "none",
        },
    )
    image_path = Path(image_path)
    out = Path(output) if output else image_path.with_name(f"{image_path.stem}.recon.png")
    save_image(recon, out)
    logger.log_metrics(record)
    logger.info("reconstructed", path=str(out), psnr=record.psnr, ssim=record.ssim)
    return ReconstructResult(out, record)
