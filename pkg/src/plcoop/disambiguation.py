"""Progressive disambiguation: screening schedule and group confidences.

Replica groups are split into two difficulty levels each batch. A replica is
*reliable* when its loss ranks within the first T(t) fraction of the batch's
smallest losses AND the network's predicted class equals its assigned label.
Because all replicas of a group share one feature vector (hence one argmax
prediction), a group contains at most one reliable replica. Groups holding a
reliable replica ("simple") get loss-softmax confidence scores
``w_j = exp(-l_j) / sum_k exp(-l_k)``; the rest ("complicated") get uniform
scores ``1/|S|``. The cap T(t) rises from exp(-5) at epoch 0 to 1 at epoch
``t_r`` and stays there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .duplication import DuplicatedDataset
from .mlp import BatchForward


@dataclass(frozen=True)
class ScheduleConfig:
    t_r: int = 100

    def __post_init__(self):
        if self.t_r < 1:
            raise ValueError("t_r must be >= 1")


@dataclass(frozen=True)
class ConfidenceVector:
    """Per-replica confidence scores, normalized within each group."""

    scores: np.ndarray  # (n,) aligned with DuplicatedDataset replicas

    def group(self, dd: DuplicatedDataset, group_index: int) -> np.ndarray:
        return self.scores[dd.replicas_of(group_index)]

    def validate(self, dd: DuplicatedDataset, tol: float = 1e-9) -> None:
        if self.scores.shape != (dd.num_replicas,):
            raise ValueError("scores length does not match replica count")
        if np.any(self.scores <= 0.0) or np.any(self.scores > 1.0):
            raise ValueError("scores must lie in (0, 1]")
        sums = np.add.reduceat(self.scores, dd.group_start)
        if np.max(np.abs(sums - 1.0)) > tol:
            raise ValueError("group scores must sum to 1")


def schedule_T(t: int, cfg: ScheduleConfig) -> float:
    """Fraction cap on reliable instances at epoch ``t``."""
    if t < 0:
        raise ValueError("epoch index must be >= 0")
    if t > cfg.t_r:
        return 1.0
    return float(np.exp(-5.0 * (t / cfg.t_r - 1.0) ** 2))


def uniform_confidences(dd: DuplicatedDataset) -> ConfidenceVector:
    """The initial state: every group gets an average confidence vector."""
    return ConfidenceVector(scores=1.0 / dd.group_sizes[dd.group_of].astype(np.float64))


def select_reliable(
    batch: np.ndarray, fwd: BatchForward, dd: DuplicatedDataset, T: float
) -> np.ndarray:
    """Replica indices that pass both screening conditions.

    Condition 1: loss ranks within the floor(T*B) smallest of the batch
    (ties broken by replica index, deterministically). Condition 2: the
    network's argmax prediction equals the replica's assigned label. Returns
    sorted global replica indices; at most one per group.
    """
    if not 0.0 < T <= 1.0:
        raise ValueError(f"T must lie in (0, 1], got {T}")
    batch = np.asarray(batch)
    b = batch.shape[0]
    cutoff = int(np.floor(T * b))
    if cutoff == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((batch, fwd.losses))
    pool = order[:cutoff]
    correct = fwd.predictions[pool] == dd.replica_labels[batch[pool]]
    return np.sort(batch[pool[correct]])


def group_softmax_confidences(
    batch: np.ndarray, losses: np.ndarray, dd: DuplicatedDataset
) -> np.ndarray:
    """Loss-softmax scores for every group in the batch (batch-aligned).

    Computed as exp(-(l - l_min)) normalized within the group, which is the
    same value as exp(-l)/sum(exp(-l)) but immune to underflow.
    """
    groups = dd.group_of[batch]
    w = np.empty(batch.shape[0], dtype=np.float64)
    start = 0
    while start < batch.shape[0]:
        stop = start
        while stop < batch.shape[0] and groups[stop] == groups[start]:
            stop += 1
        seg = losses[start:stop]
        e = np.exp(-(seg - seg.min()))
        w[start:stop] = e / e.sum()
        start = stop
    return w


def update_confidences(
    batch: np.ndarray,
    losses: np.ndarray,
    dd: DuplicatedDataset,
    reliable: np.ndarray,
) -> np.ndarray:
    """Batch-aligned confidence scores from this batch's losses.

    Groups containing a reliable replica get loss-softmax scores; all other
    groups get uniform 1/|S| scores. Requires group-atomic batches.
    """
    batch = np.asarray(batch)
    groups = dd.group_of[batch]
    simple_groups = set(dd.group_of[np.asarray(reliable, dtype=np.int64)].tolist())

    w = 1.0 / dd.group_sizes[groups].astype(np.float64)
    if simple_groups:
        softmax_w = group_softmax_confidences(batch, losses, dd)
        simple_mask = np.isin(groups, np.fromiter(simple_groups, dtype=np.int64))
        w[simple_mask] = softmax_w[simple_mask]
    return w


def disambiguation_accuracy(
    conf: ConfidenceVector | np.ndarray,
    dd: DuplicatedDataset,
    truth: np.ndarray,
) -> float:
    """Fraction of ambiguous groups whose top-confidence replica is correct.

    Only groups with |S| > 1 count. Confidence ties resolve toward the
    lowest replica index, and a tied group only scores when that replica
    carries the true label; use :func:`confidence_ties` to report how many
    groups were decided by the tie rule.
    """
    scores = conf.scores if isinstance(conf, ConfidenceVector) else np.asarray(conf)
    if truth is None:
        raise ValueError("ground-truth labels required")
    truth = np.asarray(truth, dtype=np.int64)
    correct = 0
    total = 0
    for g in range(dd.num_groups):
        replicas = dd.replicas_of(g)
        if replicas.shape[0] < 2:
            continue
        total += 1
        best = replicas[int(np.argmax(scores[replicas]))]
        if int(dd.replica_labels[best]) == int(truth[g]):
            correct += 1
    return correct / total if total else 1.0


def confidence_ties(conf: ConfidenceVector | np.ndarray, dd: DuplicatedDataset) -> int:
    """Number of ambiguous groups whose maximum confidence is not unique."""
    scores = conf.scores if isinstance(conf, ConfidenceVector) else np.asarray(conf)
    ties = 0
    for g in range(dd.num_groups):
        replicas = dd.replicas_of(g)
        if replicas.shape[0] < 2:
            continue
        vals = scores[replicas]
        if np.count_nonzero(vals == vals.max()) > 1:
            ties += 1
    return ties
