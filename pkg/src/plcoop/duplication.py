"""Replica expansion of partially labeled data.

Each instance with candidate set S becomes |S| replicas, one per candidate
label, all sharing the parent's feature vector. The |S| replicas of one
instance form a *group*: exactly one replica in a group is labeled correctly,
so group members compete for confidence. Replicas reference the parent
feature row instead of copying it, keeping storage at O(N*d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import PartialLabelDataset
from .seeding import ROLE_BATCHES, rng_for


@dataclass(frozen=True)
class DuplicatedDataset:
    features: np.ndarray       # (N, d) parent rows, shared not copied
    parent_row: np.ndarray     # (n,) replica -> parent feature row
    replica_labels: np.ndarray  # (n,) single label per replica
    group_of: np.ndarray       # (n,) replica -> group index in [0, N)
    group_start: np.ndarray    # (N,) first replica index of each group
    group_sizes: np.ndarray    # (N,) |S_i|
    num_classes: int

    @property
    def num_replicas(self) -> int:
        return self.replica_labels.shape[0]

    @property
    def num_groups(self) -> int:
        return self.group_sizes.shape[0]

    def replicas_of(self, group: int) -> np.ndarray:
        start = int(self.group_start[group])
        return np.arange(start, start + int(self.group_sizes[group]))

    def replica_features(self, replica_indices: np.ndarray) -> np.ndarray:
        return self.features[self.parent_row[replica_indices]]


def duplicate(ds: PartialLabelDataset) -> DuplicatedDataset:
    """Expand candidate sets into contiguous replica groups.

    Group i occupies a contiguous replica range carrying the labels of S_i in
    ascending order; total replicas n = sum_i |S_i|.
    """
    sizes = np.asarray([len(s) for s in ds.candidate_sets], dtype=np.int64)
    n = int(sizes.sum())
    start = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    labels = np.fromiter(
        (y for s in ds.candidate_sets for y in s), dtype=np.int64, count=n
    )
    group_of = np.repeat(np.arange(ds.num_instances), sizes)
    parent_row = group_of.copy()
    for arr in (labels, group_of, parent_row, start, sizes):
        arr.setflags(write=False)
    return DuplicatedDataset(
        features=ds.features,
        parent_row=parent_row,
        replica_labels=labels,
        group_of=group_of,
        group_start=start,
        group_sizes=sizes,
        num_classes=ds.num_classes,
    )


def reconstruct_candidate_sets(dd: DuplicatedDataset) -> tuple[tuple[int, ...], ...]:
    """Inverse of :func:`duplicate`, for round-trip checks."""
    return tuple(
        tuple(int(y) for y in dd.replica_labels[dd.replicas_of(g)])
        for g in range(dd.num_groups)
    )


def group_minibatches(
    dd: DuplicatedDataset, batch_size: int, seed: int, epoch: int
) -> list[np.ndarray]:
    """One epoch's batches of replica indices, whole groups only.

    Group order is shuffled per (seed, epoch); shuffled groups are packed
    greedily into batches of at most ``batch_size`` replicas. A group is
    never split across batches, so group confidence vectors can be computed
    within a single batch. Every replica appears exactly once.
    """
    max_group = int(dd.group_sizes.max()) if dd.num_groups else 0
    if batch_size < max_group:
        raise ValueError(
            f"batch_size={batch_size} smaller than largest group ({max_group})"
        )
    rng = rng_for(seed, ROLE_BATCHES, epoch)
    group_order = rng.permutation(dd.num_groups)

    batches: list[np.ndarray] = []
    current: list[np.ndarray] = []
    filled = 0
    for g in group_order:
        size = int(dd.group_sizes[g])
        if filled + size > batch_size:
            batches.append(np.concatenate(current))
            current, filled = [], 0
        current.append(dd.replicas_of(int(g)))
        filled += size
    if current:
        batches.append(np.concatenate(current))
    return batches
