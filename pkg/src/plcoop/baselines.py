"""Reference methods: candidate-voting k-NN and uniform averaging.

PLKNN predicts ``argmax_y sum_{i in N(x)} 1[y in S_i]``: each of the k
nearest training instances votes for every label in its candidate set. The
uniform-averaging network treats all candidate labels of an instance as
equally likely throughout training (constant 1/|S| confidence scores) and is
the classic failure mode that motivates disambiguation: false candidate
labels can overwhelm the true one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cooperation import TrainConfig, TrainedModel, train_uniform_average
from .dataset import PartialLabelDataset, make_folds, subset
from .duplication import DuplicatedDataset
from .seeding import ROLE_KNN_SELECT, derive_seed

K_GRID = (5, 10, 15, 20)


@dataclass
class PlknnModel:
    features: np.ndarray
    candidate_sets: tuple[tuple[int, ...], ...]
    num_classes: int
    k: int

    def __post_init__(self):
        n = self.features.shape[0]
        if not 1 <= self.k <= n:
            raise ValueError(f"k={self.k} outside [1, {n}]")


def plknn_fit(ds: PartialLabelDataset, k: int) -> PlknnModel:
    return PlknnModel(
        features=ds.features,
        candidate_sets=ds.candidate_sets,
        num_classes=ds.num_classes,
        k=k,
    )


def plknn_predict(model: PlknnModel, x: np.ndarray) -> int:
    """Label with the most candidate-set votes among the k nearest neighbors.

    Euclidean distance; distance ties resolve toward the lower training
    index, vote ties toward the lower label index.
    """
    x = np.asarray(x, dtype=np.float64)
    diff = model.features - x
    dist_sq = np.einsum("ij,ij->i", diff, diff)
    order = np.argsort(dist_sq, kind="stable")[: model.k]
    votes = np.zeros(model.num_classes, dtype=np.int64)
    for i in order:
        for y in model.candidate_sets[int(i)]:
            votes[y] += 1
    return int(np.argmax(votes))


def plknn_predict_batch(model: PlknnModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    return np.asarray([plknn_predict(model, row) for row in features], dtype=np.int64)


def select_k(
    ds: PartialLabelDataset,
    seed: int,
    grid: tuple[int, ...] = K_GRID,
    folds: int = 5,
) -> int:
    """Pick k from the grid by internal cross-validation.

    True labels are off limits during training, so inner folds are scored by
    the candidate-hit rate: a held-out prediction counts when it lands inside
    the instance's candidate set. Ties prefer the smaller k.
    """
    n = ds.num_instances
    folds = min(folds, n)
    smallest_train = n - (n + folds - 1) // folds
    usable = [k for k in grid if k <= smallest_train]
    if not usable:
        return min(min(grid), max(1, n - 1))
    if len(usable) == 1:
        return usable[0]
    split = make_folds(n, folds, derive_seed(seed, ROLE_KNN_SELECT))
    hits = {k: 0 for k in usable}
    for f in range(folds):
        train_ds = subset(ds, split.train_indices(f))
        val_idx = split.test_indices(f)
        for k in usable:
            model = plknn_fit(train_ds, k)
            preds = plknn_predict_batch(model, ds.features[val_idx])
            hits[k] += sum(
                int(p) in ds.candidate_sets[int(i)] for p, i in zip(preds, val_idx)
            )
    return max(usable, key=lambda k: (hits[k], -k))


def uniform_average_train(
    dd: DuplicatedDataset,
    cfg: TrainConfig,
    holdout: tuple[np.ndarray, np.ndarray] | None = None,
    **kwargs,
) -> TrainedModel:
    """Single network trained with constant uniform confidence scores."""
    return train_uniform_average(dd, cfg, holdout, **kwargs)
