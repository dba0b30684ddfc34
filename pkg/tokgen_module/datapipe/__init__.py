"""
Data pipeline - aspect-ratio matching, crop-integrity filtering,
resolution buckets, stage resolution policy and manifests
"""

from tokgen_module.datapipe.buckets import AspectRatioBucketSampler, bucket_batches
from tokgen_module.datapipe.manifest import (
    ManifestRecord,
    plan_image,
    plan_manifest,
    read_manifest,
    write_manifest,
)
from tokgen_module.datapipe.ratios import (
    ASPECT_RATIOS,
    KEEP_THRESHOLD,
    CropPlan,
    closest_ratio,
    integrity_filter,
    match_ratio,
    ratio_label,
)
from tokgen_module.datapipe.stages import (
    STAGE_ORDER,
    STAGE_PREREQUISITES,
    ResolutionMode,
    StagePlan,
    stage_plans,
    stage_resolution,
)

__all__ = [
    "AspectRatioBucketSampler",
    "bucket_batches",
    "ManifestRecord",
    "plan_image",
    "plan_manifest",
    "read_manifest",
    "write_manifest",
    "ASPECT_RATIOS",
    "KEEP_THRESHOLD",
    "CropPlan",
    "closest_ratio",
    "integrity_filter",
    "match_ratio",
    "ratio_label",
    "STAGE_ORDER",
    "STAGE_PREREQUISITES",
    "ResolutionMode",
    "StagePlan",
    "stage_plans",
    "stage_resolution",
]
