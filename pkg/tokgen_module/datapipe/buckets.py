"""
Resolution-homogeneous batching
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Hashable, Iterator, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from torch.utils.data import Sampler

T = TypeVar("T")


def bucket_batches(
    samples: Sequence[Tuple[T, Hashable]],
    batch_size: int,
    shuffle_seed: Optional[int] = None,
) -> List[List[T]]:
    """
    Group (sample, resolution) pairs into batches of one resolution each.

    Buckets appear in order of first occurrence and keep input order inside;
    the last batch of a bucket may be smaller. With ``shuffle_seed`` the
    members of each bucket and then the batch order are shuffled
    deterministically.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    buckets: "OrderedDict[Hashable, List[T]]" = OrderedDict()
    for sample, resolution in samples:
        key = tuple(resolution) if isinstance(resolution, (list, tuple)) else resolution
        buckets.setdefault(key, []).append(sample)

    rng = np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    batches: List[List[T]] = []
    for members in buckets.values():
        if rng is not None:
            members = [members[i] for i in rng.permutation(len(members))]
        for start in range(0, len(members), batch_size):
            batches.append(members[start:start + batch_size])
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


class AspectRatioBucketSampler(Sampler):
    """
    Batch sampler yielding index lists of a single target resolution.

    Args:
        resolutions: Target (H, W) of every dataset index
        batch_size: Maximum batch size
        shuffle: Reshuffle every epoch (seeded by ``seed + epoch``)
        seed: Base seed
    """

    def __init__(
        self,
        resolutions: Sequence[Tuple[int, int]],
        batch_size: int,
        shuffle: bool = True,
        seed: int = 0,
    ):
        self.resolutions = [tuple(r) for r in resolutions]
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def batches(self) -> List[List[int]]:
        seed = self.seed + self.epoch if self.shuffle else None
        return bucket_batches(
            list(zip(range(len(self.resolutions)), self.resolutions)), self.batch_size, seed
        )

    def __iter__(self) -> Iterator[List[int]]:
        yield from self.batches()

    def __len__(self) -> int:
        return len(self.batches())
