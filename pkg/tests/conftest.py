import numpy as np
import pytest

from plcoop.dataset import PartialLabelDataset
from plcoop.synth import gaussian_blobs, glass_like


@pytest.fixture(scope="session")
def glass_ds() -> PartialLabelDataset:
    return glass_like(seed=7)


@pytest.fixture()
def tiny_blobs():
    train, hold = gaussian_blobs(120, num_classes=2, separation=5.0, seed=11, holdout=60)
    return train, hold


def random_partial_dataset(rng: np.random.Generator, n=None, d=None, c=None):
    """Small random dataset with nonempty candidate sets containing the truth."""
    n = n or int(rng.integers(5, 30))
    d = d or int(rng.integers(1, 6))
    c = c or int(rng.integers(2, 6))
    features = rng.normal(size=(n, d))
    truth = rng.integers(0, c, size=n)
    sets = []
    for y in truth:
        extra = rng.integers(0, c, size=int(rng.integers(0, c)))
        sets.append(tuple(sorted({int(y), *extra.tolist()})))
    return PartialLabelDataset(
        features=features,
        candidate_sets=tuple(sets),
        num_classes=c,
        true_labels=truth,
    )
