"""
Data manifests: one JSON line per image with its crop plan and target size
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

from PIL import Image, UnidentifiedImageError

from tokgen_module.datapipe.ratios import integrity_filter, match_ratio, ratio_label
from tokgen_module.datapipe.stages import StagePlan, stage_resolution
from tokgen_module.telemetry.run_logger import RunLogger, get_logger

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


@dataclass
class ManifestRecord:
    path: str
    width: int
    height: int
    ratio: str
    retained: float
    keep: bool
    target: Optional[Tuple[int, int]] = None

    def to_json(self) -> str:
        data = asdict(self)
        if self.target is not None:
            data["target"] = list(self.target)
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        data = json.loads(line)
        if data.get("target") is not None:
            data["target"] = tuple(data["target"])
        return cls(**data)


def plan_image(path: str, width: int, height: int, stage: Optional[StagePlan] = None) -> ManifestRecord:
    plan = match_ratio(width, height)
    keep = integrity_filter(plan)
    target = stage_resolution(stage, width, height) if stage is not None and keep else None
    return ManifestRecord(
        path=path,
        width=width,
        height=height,
        ratio=ratio_label(plan.ratio),
        retained=float(plan.retained),
        keep=keep,
        target=target,
    )


def iter_images(folder: Union[str, Path]) -> List[Path]:
    folder = Path(folder)
    return sorted(p for p in folder.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)


def plan_manifest(
    folder: Union[str, Path],
    manifest: Union[str, Path],
    stage: Optional[StagePlan] = None,
    logger: Optional[RunLogger] = None,
) -> List[ManifestRecord]:
    """
    Plan every image under ``folder`` and write the manifest.

    Unreadable files are skipped with a warning.
    """
    logger = logger or get_logger()
    records = []
    for path in iter_images(folder):
        try:
            with Image.open(path) as img:
                width, height = img.size
        except (OSError, UnidentifiedImageError) as exc:
            logger.warn("skipping unreadable image", path=str(path), error=str(exc))
            continue
        records.append(plan_image(str(path), width, height, stage))
    write_manifest(manifest, records)
    kept = sum(r.keep for r in records)
    logger.info("manifest written", path=str(manifest), images=len(records), kept=kept)
    return records


def write_manifest(path: Union[str, Path], records: Iterable[ManifestRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(record.to_json() + "\n")
    return path


def read_manifest(path: Union[str, Path]) -> List[ManifestRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [ManifestRecord.from_json(line) for line in f if line.strip()]
