import numpy as np
import pytest

from plcoop.dataset import PartialLabelDataset
from plcoop.duplication import duplicate, group_minibatches, reconstruct_candidate_sets

from conftest import random_partial_dataset


def make_ds(sets, d=3, c=None):
    sets = tuple(tuple(s) for s in sets)
    c = c if c is not None else max(y for s in sets for y in s) + 1
    rng = np.random.default_rng(0)
    return PartialLabelDataset(
        features=rng.normal(size=(len(sets), d)),
        candidate_sets=sets,
        num_classes=c,
    )


class TestDuplicate:
    def test_three_candidates_three_replicas(self):
        ds = make_ds([(0, 1, 2)])
        dd = duplicate(ds)
        assert dd.num_replicas == 3
        assert dd.replica_labels.tolist() == [0, 1, 2]
        feats = dd.replica_features(np.arange(3))
        for row in feats:
            np.testing.assert_array_equal(row, ds.features[0])

    def test_replica_count_sums_set_sizes(self):
        dd = duplicate(make_ds([(0, 1), (0, 1, 2)]))
        assert dd.num_replicas == 5
        assert dd.num_groups == 2
        assert dd.group_sizes.tolist() == [2, 3]

    def test_singleton_group(self):
        dd = duplicate(make_ds([(1,)], c=3))
        assert dd.num_replicas == 1
        assert dd.replica_labels.tolist() == [1]

    def test_group_maps_are_inverse(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            ds = random_partial_dataset(rng)
            dd = duplicate(ds)
            for g in range(dd.num_groups):
                for rep in dd.replicas_of(g):
                    assert int(dd.group_of[rep]) == g
            assert dd.num_replicas == int(dd.group_sizes.sum())

    def test_round_trip(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            ds = random_partial_dataset(rng)
            assert reconstruct_candidate_sets(duplicate(ds)) == ds.candidate_sets


class TestGroupMinibatches:
    def test_greedy_packing(self):
        dd = duplicate(make_ds([(0, 1), (0, 1), (0, 1)]))
        batches = group_minibatches(dd, batch_size=4, seed=0, epoch=0)
        assert [b.shape[0] for b in batches] == [4, 2]

    def test_default_batch_size_packing(self):
        dd = duplicate(make_ds([(0, 1)] * 300))
        batches = group_minibatches(dd, batch_size=128, seed=1, epoch=0)
        assert [b.shape[0] for b in batches] == [128, 128, 128, 128, 88]
        # 64 whole groups per full batch
        for b in batches[:4]:
            assert len(set(dd.group_of[b].tolist())) == 64

    def test_oversized_group_rejected(self):
        dd = duplicate(make_ds([(0, 1, 2, 3, 4)]))
        with pytest.raises(ValueError, match="batch_size"):
            group_minibatches(dd, batch_size=4, seed=0, epoch=0)

    def test_batches_partition_replicas(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            ds = random_partial_dataset(rng)
            dd = duplicate(ds)
            bs = int(dd.group_sizes.max()) + int(rng.integers(0, 5))
            for epoch in range(3):
                batches = group_minibatches(dd, bs, seed=7, epoch=epoch)
                seen = np.concatenate(batches)
                assert sorted(seen.tolist()) == list(range(dd.num_replicas))
                for b in batches:
                    assert b.shape[0] <= bs

    def test_no_group_split_across_batches(self):
        rng = np.random.default_rng(21)
        ds = random_partial_dataset(rng, n=40)
        dd = duplicate(ds)
        batches = group_minibatches(dd, int(dd.group_sizes.max()) + 3, seed=2, epoch=1)
        for b in batches:
            groups, counts = np.unique(dd.group_of[b], return_counts=True)
            np.testing.assert_array_equal(counts, dd.group_sizes[groups])

    def test_deterministic_per_seed_epoch(self):
        dd = duplicate(make_ds([(0, 1), (1, 2), (0, 2), (2,)]))
        a = group_minibatches(dd, 4, seed=9, epoch=4)
        b = group_minibatches(dd, 4, seed=9, epoch=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = group_minibatches(dd, 4, seed=9, epoch=5)
        assert any(not np.array_equal(x, y) for x, y in zip(a, c))
