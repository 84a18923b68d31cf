"""Synthetic benchmark datasets with known ground truth.

Used for controlled experiments where the true labels must be available to
score predictions: Gaussian blob problems of tunable difficulty, and a fixed
214x10 five-class benchmark ("glass-like": small, imbalanced, mixed feature
scales, several nuisance dimensions) that mirrors the shape of the classic
UCI glass identification task.
"""

from __future__ import annotations

import numpy as np

from .dataset import PartialLabelDataset

GLASS_LIKE_CLASS_SIZES = (70, 76, 17, 22, 29)   # N = 214
GLASS_LIKE_NUM_FEATURES = 10
_GLASS_INFORMATIVE = 6                          # remaining columns are noise
_GLASS_COLUMN_SCALE = (1.52, 14.0, 2.7, 1.4, 72.0, 0.5, 8.9, 0.18, 0.06, 100.0)


def gaussian_blobs(
    n: int,
    num_classes: int = 2,
    d: int = 2,
    separation: float = 4.0,
    seed: int = 0,
    holdout: int = 0,
    center_layout: str = "circle",
    outlier_fraction: float = 0.0,
    outlier_scale: float = 3.0,
) -> tuple[PartialLabelDataset, PartialLabelDataset | None]:
    """Equal-prior Gaussian classes with unit covariance.

    Class centers sit ``separation`` standard deviations apart: on a line for
    two classes, on a circle in the first two dimensions otherwise, or along
    mutually orthogonal axes with ``center_layout="orthogonal"`` (requires
    ``d >= num_classes``; every pair then has the same distance). A fraction
    of instances can be drawn as outliers with inflated scatter, which makes
    them sit deep inside other classes' regions. Returns a training set of
    ``n`` instances and, when ``holdout > 0``, an extra independently drawn
    evaluation set.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if d < min(2, num_classes - 1):
        raise ValueError("feature dimension too small for the requested centers")
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    centers = np.zeros((num_classes, d))
    if center_layout == "orthogonal":
        if d < num_classes:
            raise ValueError("orthogonal layout needs d >= num_classes")
        idx = np.arange(num_classes)
        centers[idx, idx] = separation / np.sqrt(2.0)
    elif center_layout == "circle":
        if num_classes == 2:
            centers[0, 0] = -separation / 2.0
            centers[1, 0] = separation / 2.0
        else:
            radius = separation / (2.0 * np.sin(np.pi / num_classes))
            angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
            centers[:, 0] = radius * np.cos(angles)
            centers[:, 1] = radius * np.sin(angles)
    else:
        raise ValueError(f"unknown center_layout {center_layout!r}")

    def draw(count: int) -> PartialLabelDataset:
        labels = rng.integers(0, num_classes, size=count)
        feats = rng.standard_normal((count, d))
        if outlier_fraction > 0.0:
            outliers = rng.random(count) < outlier_fraction
            feats[outliers] *= outlier_scale
        feats += centers[labels]
        return PartialLabelDataset(
            features=feats,
            candidate_sets=tuple((int(y),) for y in labels),
            num_classes=num_classes,
            true_labels=labels,
        )

    train = draw(n)
    extra = draw(holdout) if holdout > 0 else None
    return train, extra


def glass_like(seed: int = 7) -> PartialLabelDataset:
    """Deterministic 214-instance, 10-feature, 5-class benchmark.

    Classes are anisotropic Gaussian clusters that overlap in 6 informative
    dimensions; the other 4 dimensions are pure noise, and every column is
    shifted/scaled to a distinct raw range so that feature standardization
    actually matters. Class sizes are imbalanced (70/76/17/22/29).
    """
    rng = np.random.default_rng(seed)
    num_classes = len(GLASS_LIKE_CLASS_SIZES)
    d = GLASS_LIKE_NUM_FEATURES

    centers = np.zeros((num_classes, d))
    centers[:, :_GLASS_INFORMATIVE] = rng.normal(
        0.0, 1.45, size=(num_classes, _GLASS_INFORMATIVE)
    )
    spreads = rng.uniform(0.75, 1.35, size=(num_classes, _GLASS_INFORMATIVE))

    feats = []
    labels = []
    for cls, size in enumerate(GLASS_LIKE_CLASS_SIZES):
        block = rng.standard_normal((size, d))
        block[:, :_GLASS_INFORMATIVE] *= spreads[cls]
        block += centers[cls]
        feats.append(block)
        labels.extend([cls] * size)
    features = np.vstack(feats)
    labels = np.asarray(labels, dtype=np.int64)

    # Shuffle rows so folds are not class-sorted, then map to raw ranges.
    order = rng.permutation(features.shape[0])
    features = features[order]
    labels = labels[order]
    offsets = np.asarray([3.0, 13.4, 2.7, 1.4, 72.6, 0.5, 8.9, 0.18, 0.06, 40.0])
    features = features * np.asarray(_GLASS_COLUMN_SCALE) * 0.35 + offsets

    return PartialLabelDataset(
        features=features,
        candidate_sets=tuple((int(y),) for y in labels),
        num_classes=num_classes,
        true_labels=labels,
        label_names=tuple(f"type_{k}" for k in range(num_classes)),
    )
