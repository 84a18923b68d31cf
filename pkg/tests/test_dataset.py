import numpy as np
import pytest

from plcoop.dataset import (
    CsvSchema,
    DatasetError,
    FeatureStats,
    PartialLabelDataset,
    apply_stats,
    generate_controlled,
    load_csv,
    load_dataset_dir,
    make_folds,
    read_manifest,
    save_dataset,
    standardize_features,
    subset,
)

def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_clean_labels_reindexed_by_first_appearance(self, tmp_path):
        path = write_csv(tmp_path, "a,b,label\n1,2,cat\n3,4,dog\n5,6,cat\n")
        ds = load_csv(path, CsvSchema(label_column="label"))
        assert ds.num_classes == 2
        assert ds.candidate_sets == ((0,), (1,), (0,))
        assert ds.label_names == ("cat", "dog")
        np.testing.assert_allclose(ds.features, [[1, 2], [3, 4], [5, 6]])

    def test_candidate_column_pipe_parsing(self, tmp_path):
        path = write_csv(tmp_path, "x,cands\n0,0\n1,1\n2,2\n3,3\n4,1|3\n")
        ds = load_csv(path, CsvSchema(candidate_column="cands"))
        assert ds.num_classes == 4
        assert ds.candidate_sets[4] == (1, 3)

    def test_candidate_tokens_reindexed_by_first_appearance(self, tmp_path):
        # appearance order decides codes: "5" -> 0, "9" -> 1, "2" -> 2
        path = write_csv(tmp_path, "x,cands\n0,5|9\n1,2\n2,9\n")
        ds = load_csv(path, CsvSchema(candidate_column="cands"))
        assert ds.candidate_sets == ((0, 1), (2,), (1,))
        assert ds.label_names == ("5", "9", "2")

    def test_glass_shape(self, tmp_path, glass_ds):
        save_dataset(glass_ds, tmp_path / "glass")
        ds, manifest = load_dataset_dir(tmp_path / "glass")
        assert ds.num_instances == 214
        assert ds.num_features == 10
        assert ds.num_classes == 5
        assert manifest["n_classes"] == "5"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_csv(tmp_path / "nope.csv", CsvSchema(label_column="y"))

    def test_non_numeric_feature_reports_line(self, tmp_path):
        path = write_csv(tmp_path, "a,label\n1,x\noops,y\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_csv(path, CsvSchema(label_column="label"))

    def test_empty_candidate_cell_reports_line(self, tmp_path):
        path = write_csv(tmp_path, "a,cands\n1,2\n2,\n")
        with pytest.raises(DatasetError, match="line 3.*empty candidate"):
            load_csv(path, CsvSchema(candidate_column="cands"))

    def test_unknown_label_token(self, tmp_path):
        path = write_csv(tmp_path, "a,label\n1,cat\n2,bird\n")
        schema = CsvSchema(label_column="label", classes=["cat", "dog"])
        with pytest.raises(DatasetError, match="line 3.*unknown label token"):
            load_csv(path, schema)

    def test_schema_needs_exactly_one_label_source(self):
        with pytest.raises(DatasetError):
            CsvSchema(label_column="y", candidate_column="c")
        with pytest.raises(DatasetError):
            CsvSchema()

    def test_truth_outside_candidates_rejected(self, tmp_path):
        path = write_csv(tmp_path, "a,cands,truth\n1,0|1,0\n2,0|1,2\n3,2,2\n")
        with pytest.raises(DatasetError, match="true label"):
            load_csv(path, CsvSchema(candidate_column="cands", true_label_column="truth"))


class TestInvariants:
    def test_empty_candidate_set_rejected(self):
        with pytest.raises(DatasetError, match="empty candidate"):
            PartialLabelDataset(
                features=np.zeros((1, 2)), candidate_sets=((),), num_classes=2
            )

    def test_out_of_range_label_rejected(self):
        with pytest.raises(DatasetError, match="outside"):
            PartialLabelDataset(
                features=np.zeros((1, 2)), candidate_sets=((3,),), num_classes=2
            )

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(DatasetError):
            PartialLabelDataset(
                features=np.zeros((2, 2)), candidate_sets=((0,),), num_classes=2
            )


class TestGenerateControlled:
    def test_glass_p_half_r_one_counts(self, glass_ds):
        corrupted = generate_controlled(glass_ds, p=0.5, r=1, seed=1)
        sizes = np.asarray([len(s) for s in corrupted.candidate_sets])
        # round(0.5 * 214) = 107
        assert int((sizes == 2).sum()) == 107
        assert int((sizes == 1).sum()) == 107

    def test_p_zero_is_identity(self, glass_ds):
        out = generate_controlled(glass_ds, p=0.0, r=2, seed=9)
        assert out.candidate_sets == glass_ds.candidate_sets
        np.testing.assert_array_equal(out.features, glass_ds.features)

    def test_full_ambiguity_when_r_saturates(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 4, size=20)
        ds = PartialLabelDataset(
            features=rng.normal(size=(20, 3)),
            candidate_sets=tuple((int(y),) for y in truth),
            num_classes=4,
            true_labels=truth,
        )
        out = generate_controlled(ds, p=1.0, r=3, seed=5)
        assert all(s == (0, 1, 2, 3) for s in out.candidate_sets)

    def test_truth_always_in_candidates_and_false_labels_distinct(self, glass_ds):
        for seed in range(10):
            out = generate_controlled(glass_ds, p=0.7, r=3, seed=seed)
            for y, s in zip(out.true_labels, out.candidate_sets):
                assert int(y) in s
                assert len(set(s)) == len(s)
                assert len(s) in (1, 4)

    def test_deterministic(self, glass_ds):
        a = generate_controlled(glass_ds, p=0.3, r=2, seed=42)
        b = generate_controlled(glass_ds, p=0.3, r=2, seed=42)
        assert a.candidate_sets == b.candidate_sets

    def test_r_too_large_rejected(self, glass_ds):
        with pytest.raises(DatasetError, match="exceeds"):
            generate_controlled(glass_ds, p=0.5, r=5, seed=0)

    def test_requires_truth(self):
        ds = PartialLabelDataset(
            features=np.zeros((3, 1)), candidate_sets=((0,), (1,), (0,)), num_classes=2
        )
        with pytest.raises(DatasetError, match="ground-truth"):
            generate_controlled(ds, p=0.5, r=1, seed=0)


class TestStandardize:
    def _ds(self, features):
        features = np.asarray(features, dtype=float)
        return PartialLabelDataset(
            features=features,
            candidate_sets=tuple((0,) for _ in range(features.shape[0])),
            num_classes=1,
        )

    def test_two_point_column(self):
        out, stats = standardize_features(self._ds([[0.0], [2.0]]))
        # mean 1, population std 1
        np.testing.assert_allclose(out.features, [[-1.0], [1.0]])
        np.testing.assert_allclose(stats.mean, [1.0])
        np.testing.assert_allclose(stats.std, [1.0])

    def test_constant_column_maps_to_zero(self):
        out, _ = standardize_features(self._ds([[7.0], [7.0], [7.0]]))
        np.testing.assert_array_equal(out.features, np.zeros((3, 1)))

    def test_reusing_training_stats(self):
        train = self._ds([[0.0], [2.0]])
        _, stats = standardize_features(train)
        test, _ = standardize_features(self._ds([[4.0]]), stats)
        np.testing.assert_allclose(test.features, [[3.0]])

    def test_second_application_uses_given_stats(self):
        ds = self._ds([[0.0], [2.0]])
        once, stats = standardize_features(ds)
        twice, _ = standardize_features(once, stats)
        # not idempotent: second pass re-applies the first-pass stats
        np.testing.assert_allclose(twice.features, [[-2.0], [0.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DatasetError, match="dimensionality"):
            standardize_features(
                self._ds([[1.0, 2.0]]),
                FeatureStats(mean=np.zeros(3), std=np.ones(3)),
            )

    def test_apply_stats_matches_dataset_path(self):
        ds = self._ds([[0.0], [2.0], [5.0]])
        out, stats = standardize_features(ds)
        np.testing.assert_array_equal(apply_stats(ds.features, stats), out.features)


class TestMakeFolds:
    def test_one_instance_per_fold(self):
        split = make_folds(10, 10, seed=0)
        sizes = np.bincount(split.assignments, minlength=10)
        assert sizes.tolist() == [1] * 10

    def test_glass_fold_sizes(self):
        split = make_folds(214, 10, seed=3)
        sizes = sorted(np.bincount(split.assignments, minlength=10).tolist())
        # 214 = 6*21 + 4*22
        assert sizes == [21] * 6 + [22] * 4

    def test_deterministic(self):
        a = make_folds(50, 5, seed=9)
        b = make_folds(50, 5, seed=9)
        np.testing.assert_array_equal(a.assignments, b.assignments)

    def test_partition_covers_everything(self):
        split = make_folds(37, 4, seed=1)
        seen = np.concatenate([split.test_indices(f) for f in range(4)])
        assert sorted(seen.tolist()) == list(range(37))
        for f in range(4):
            both = set(split.test_indices(f)) & set(split.train_indices(f))
            assert not both

    def test_too_few_instances(self):
        with pytest.raises(DatasetError):
            make_folds(3, 4, seed=0)


class TestSaveLoadRoundTrip:
    def test_lossless(self, tmp_path, glass_ds):
        corrupted = generate_controlled(glass_ds, p=0.4, r=2, seed=8)
        save_dataset(corrupted, tmp_path / "d", manifest_extra={"p": "0.4", "r": 2, "seed": 8})
        loaded, manifest = load_dataset_dir(tmp_path / "d")
        np.testing.assert_array_equal(loaded.features, corrupted.features)
        assert loaded.candidate_sets == corrupted.candidate_sets
        np.testing.assert_array_equal(loaded.true_labels, corrupted.true_labels)
        assert manifest["p"] == "0.4"
        assert manifest["r"] == "2"

    def test_manifest_readable(self, tmp_path, glass_ds):
        save_dataset(glass_ds, tmp_path / "d")
        manifest = read_manifest(tmp_path / "d" / "manifest.txt")
        assert manifest["n_instances"] == "214"
        assert manifest["format"] == "plcoop-dataset-v1"


def test_subset_keeps_invariants(glass_ds):
    corrupted = generate_controlled(glass_ds, p=0.5, r=2, seed=2)
    sub = subset(corrupted, np.asarray([5, 1, 200]))
    assert sub.num_instances == 3
    assert sub.candidate_sets[0] == corrupted.candidate_sets[5]
    assert int(sub.true_labels[1]) == int(corrupted.true_labels[1])
