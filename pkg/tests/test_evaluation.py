import numpy as np
import pytest
from scipy import stats as scipy_stats

from plcoop.cooperation import TrainConfig
from plcoop.dataset import PartialLabelDataset, generate_controlled
from plcoop.evaluation import (
    INFERIOR,
    METHOD_REGISTRY,
    NOT_SIGNIFICANT,
    SUPERIOR,
    _critical_value,
    aggregate,
    comparison_table,
    dataset_fingerprint,
    fold_signature,
    paired_t_test,
    read_results_jsonl,
    run_cv,
    t_statistic,
    write_results_jsonl,
)
from plcoop.synth import gaussian_blobs


@pytest.fixture()
def const_zero_method():
    name = "const-zero"
    METHOD_REGISTRY[name] = lambda train_ds, test_x, test_y, cfg, seed: (
        np.zeros(test_x.shape[0], dtype=np.int64), {}
    )
    yield name
    del METHOD_REGISTRY[name]


def result_with(accs, method="m", dataset="d", signature="sig"):
    return aggregate(method, dataset, accs, seed=0, fold_count=len(accs),
                     fold_signature=signature, config={}, wall_seconds=0.0)


class TestRunCv:
    def test_constant_predictor_scores_class_proportion(self, const_zero_method):
        rng = np.random.default_rng(0)
        truth = np.asarray([0] * 30 + [1] * 70)
        rng.shuffle(truth)
        ds = PartialLabelDataset(
            features=rng.normal(size=(100, 3)),
            candidate_sets=tuple((int(y),) for y in truth),
            num_classes=2,
            true_labels=truth,
        )
        result = run_cv(ds, const_zero_method, TrainConfig(), seed=5, fold_count=10)
        # equal fold sizes make the fold-mean exactly the class-0 proportion
        assert result.mean == pytest.approx(0.30, abs=1e-12)

    def test_deterministic(self):
        ds, _ = gaussian_blobs(60, num_classes=2, separation=3.0, seed=2)
        corrupted = generate_controlled(ds, 0.5, 1, seed=3)
        cfg = TrainConfig(total_epochs=3, batch_size=32, hidden_dim=8)
        a = run_cv(corrupted, "uniform-avg", cfg, seed=7, fold_count=3)
        b = run_cv(corrupted, "uniform-avg", cfg, seed=7, fold_count=3)
        assert a.fold_accuracies == b.fold_accuracies
        assert a.fold_signature == b.fold_signature

    def test_jobs_do_not_change_results(self):
        ds, _ = gaussian_blobs(60, num_classes=2, separation=3.0, seed=4)
        corrupted = generate_controlled(ds, 0.5, 1, seed=5)
        cfg = TrainConfig(total_epochs=2, batch_size=32, hidden_dim=8)
        serial = run_cv(corrupted, "uniform-avg", cfg, seed=9, fold_count=3, jobs=1)
        parallel = run_cv(corrupted, "uniform-avg", cfg, seed=9, fold_count=3, jobs=2)
        assert serial.fold_accuracies == parallel.fold_accuracies

    def test_unknown_method_rejected(self):
        ds, _ = gaussian_blobs(30, num_classes=2, separation=3.0, seed=1)
        with pytest.raises(ValueError, match="unknown method"):
            run_cv(ds, "nope", TrainConfig(), seed=0)

    def test_requires_truth(self, const_zero_method):
        ds = PartialLabelDataset(
            features=np.zeros((20, 2)),
            candidate_sets=tuple((0,) for _ in range(20)),
            num_classes=1,
        )
        with pytest.raises(ValueError, match="ground-truth"):
            run_cv(ds, const_zero_method, TrainConfig(), seed=0, fold_count=2)

    def test_early_stopping_rejected_under_cv(self):
        ds, _ = gaussian_blobs(40, num_classes=2, separation=3.0, seed=2)
        cfg = TrainConfig(total_epochs=3, hidden_dim=8, early_stop_patience=2)
        with pytest.raises(ValueError, match="early stopping"):
            run_cv(ds, "uniform-avg", cfg, seed=0, fold_count=2)

    def test_mean_std_aggregation(self):
        res = result_with([0.8, 0.9])
        assert res.mean == pytest.approx(0.85, abs=1e-15)
        assert res.std == pytest.approx(np.sqrt(0.005), abs=1e-15)

    def test_plknn_extras_record_k(self):
        ds, _ = gaussian_blobs(80, num_classes=2, separation=3.0, seed=6)
        corrupted = generate_controlled(ds, 0.3, 1, seed=7)
        extras: list = []
        run_cv(corrupted, "plknn", TrainConfig(), seed=11, fold_count=3,
               collect_extras=extras)
        assert [fold for fold, _ in extras] == [0, 1, 2]
        assert all(data["k"] in (5, 10, 15, 20) for _, data in extras)


class TestPairedTTest:
    def test_identical_folds_not_significant(self):
        a = result_with([0.8, 0.82, 0.84, 0.86])
        b = result_with([0.8, 0.82, 0.84, 0.86])
        assert paired_t_test(a, b) == NOT_SIGNIFICANT

    def test_constant_nonzero_difference_is_significant(self):
        a = result_with([0.85, 0.90, 0.80])
        b = result_with([0.80, 0.85, 0.75])
        assert paired_t_test(a, b) == SUPERIOR
        assert paired_t_test(b, a) == INFERIOR

    def test_hand_computed_example(self):
        # differences: mean 0.01, sample sd 0.0182574; t = 1.7320508 < 2.262 (df=9)
        diffs = [0.02, -0.01, 0.03, 0.00, 0.01, 0.02, -0.02, 0.01, 0.04, 0.00]
        base = [0.5] * 10
        a = result_with([b + d for b, d in zip(base, diffs)])
        b = result_with(base)
        assert t_statistic(np.asarray(diffs)) == pytest.approx(np.sqrt(3.0), abs=1e-7)
        assert paired_t_test(a, b) == NOT_SIGNIFICANT
        # scipy agrees the two-sided p-value stays above 0.05
        p = scipy_stats.ttest_rel(a.fold_accuracies, b.fold_accuracies).pvalue
        assert p > 0.05

    def test_antisymmetric_on_random_vectors(self):
        rng = np.random.default_rng(77)
        flip = {SUPERIOR: INFERIOR, INFERIOR: SUPERIOR,
                NOT_SIGNIFICANT: NOT_SIGNIFICANT}
        for _ in range(100):
            n = int(rng.integers(2, 12))
            a_acc = np.round(rng.uniform(0, 1, size=n), 2)
            roll = rng.random()
            if roll < 0.1:
                b_acc = a_acc.copy()
            elif roll < 0.2:
                b_acc = np.clip(a_acc - 0.05, 0, 1)
            else:
                b_acc = np.round(rng.uniform(0, 1, size=n), 2)
            a = result_with(a_acc.tolist())
            b = result_with(b_acc.tolist())
            assert paired_t_test(b, a) == flip[paired_t_test(a, b)]

    def test_agrees_with_scipy_verdicts(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            n = int(rng.integers(3, 15))
            a_acc = rng.uniform(0.3, 0.9, size=n)
            b_acc = np.clip(a_acc + rng.normal(0, 0.05, size=n), 0, 1)
            if np.std(a_acc - b_acc, ddof=1) == 0:
                continue
            verdict = paired_t_test(result_with(a_acc.tolist()),
                                    result_with(b_acc.tolist()))
            t, p = scipy_stats.ttest_rel(a_acc, b_acc)
            if p < 0.05 - 1e-9:
                expected = SUPERIOR if t > 0 else INFERIOR
            elif p > 0.05 + 1e-9:
                expected = NOT_SIGNIFICANT
            else:
                continue  # too close to the boundary for a 3-decimal table
            assert verdict == expected

    def test_mismatched_folds_rejected(self):
        a = result_with([0.8, 0.9])
        b = result_with([0.8, 0.9, 1.0])
        with pytest.raises(ValueError, match="fold"):
            paired_t_test(a, b)
        c = result_with([0.7, 0.8], signature="other")
        with pytest.raises(ValueError, match="fold splits"):
            paired_t_test(a, c)

    def test_unsupported_alpha(self):
        a = result_with([0.8, 0.9])
        b = result_with([0.7, 0.8])
        with pytest.raises(ValueError, match="significance level"):
            paired_t_test(a, b, alpha=0.2)

    def test_critical_table_matches_scipy(self):
        for alpha in (0.10, 0.05, 0.01):
            for df in range(1, 31):
                expected = scipy_stats.t.ppf(1.0 - alpha / 2.0, df)
                assert _critical_value(alpha, df) == pytest.approx(expected, abs=5e-4)


class TestComparisonTable:
    def test_single_method_no_markers(self):
        table = comparison_table([result_with([0.8, 0.9], method="ncpd")], "ncpd")
        body = "\n".join(table.to_text().splitlines()[:-1])  # drop the legend
        assert "•" not in body and "○" not in body

    def test_identical_results_blank_marker(self):
        a = result_with([0.8, 0.9], method="ncpd")
        b = result_with([0.8, 0.9], method="plknn")
        table = comparison_table([a, b], "ncpd")
        row = table.rows[0]
        assert row["cells"]["plknn"]["marker"] == ""
        assert row["cells"]["plknn"]["verdict"] == NOT_SIGNIFICANT

    def test_superiority_marker(self):
        a = result_with([0.9, 0.95, 0.92], method="ncpd")
        b = result_with([0.5, 0.55, 0.52], method="plknn")
        table = comparison_table([a, b], "ncpd")
        assert table.rows[0]["cells"]["plknn"]["marker"] == "•"
        assert "•" in table.to_text()

    def test_csv_round_trips_full_precision(self):
        a = result_with([0.8123456789012345, 0.9], method="ncpd")
        b = result_with([0.7, 0.8], method="plknn")
        table = comparison_table([a, b], "ncpd")
        lines = table.to_csv().strip().splitlines()
        header, *rows = lines
        assert header == "dataset,method,mean,std,verdict_vs_reference"
        parsed = {row.split(",")[1]: float(row.split(",")[2]) for row in rows}
        assert parsed["ncpd"] == a.mean
        assert parsed["plknn"] == b.mean

    def test_missing_reference_rejected(self):
        with pytest.raises(ValueError, match="reference"):
            comparison_table([result_with([0.8, 0.9], method="plknn")], "ncpd")


class TestResultStore:
    def test_jsonl_round_trip(self, tmp_path):
        results = [
            result_with([0.8, 0.9], method="ncpd", dataset="a"),
            result_with([0.6, 0.7], method="plknn", dataset="a"),
        ]
        path = tmp_path / "results.jsonl"
        write_results_jsonl(results, path)
        loaded = read_results_jsonl(path)
        assert [r.method for r in loaded] == ["ncpd", "plknn"]
        assert loaded[0].fold_accuracies == results[0].fold_accuracies
        assert loaded[0].mean == results[0].mean

    def test_fingerprint_changes_with_data(self):
        ds, _ = gaussian_blobs(30, num_classes=2, separation=3.0, seed=1)
        other = generate_controlled(ds, 0.5, 1, seed=2)
        assert dataset_fingerprint(ds) != dataset_fingerprint(other)
        assert fold_signature("abc", 1, 10) == "abc:1:10"
