"""Cross-validation orchestration, aggregation, and significance testing.

Every method in one comparison sees identical fold assignments and the same
corrupted dataset; standardization statistics always come from the training
folds. Results are aggregated as mean and sample standard deviation of the
per-fold accuracies and compared with a paired two-tailed t-test at a fixed
significance level.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from pathlib import Path
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import cooperation
from .baselines import plknn_fit, plknn_predict_batch, select_k
from .cooperation import TrainConfig
from .dataset import (
    PartialLabelDataset,
    apply_stats,
    make_folds,
    standardize_features,
    subset,
)
from .duplication import duplicate
from .seeding import ROLE_FOLD_TRAIN, derive_seed

SUPERIOR = "superior"
INFERIOR = "inferior"
NOT_SIGNIFICANT = "not significant"

# Two-tailed critical values of Student's t for df = 1..30.
_T_CRITICAL = {
    0.10: (
        6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860, 1.833, 1.812,
        1.796, 1.782, 1.771, 1.761, 1.753, 1.746, 1.740, 1.734, 1.729, 1.725,
        1.721, 1.717, 1.714, 1.711, 1.708, 1.706, 1.703, 1.701, 1.699, 1.697,
    ),
    0.05: (
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ),
    0.01: (
        63.657, 9.925, 5.841, 4.604, 4.032, 3.707, 3.499, 3.355, 3.250, 3.169,
        3.106, 3.055, 3.012, 2.977, 2.947, 2.921, 2.898, 2.878, 2.861, 2.845,
        2.831, 2.819, 2.807, 2.797, 2.787, 2.779, 2.771, 2.763, 2.756, 2.750,
    ),
}


@dataclass
class ExperimentResult:
    method: str
    dataset: str
    fold_accuracies: list[float]
    mean: float
    std: float
    seed: int
    fold_count: int
    fold_signature: str            # same value <=> same fold assignments
    config: dict
    wall_seconds: float

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ExperimentResult":
        return cls(**json.loads(line))


def aggregate(method: str, dataset: str, fold_accuracies, seed, fold_count,
              fold_signature, config, wall_seconds) -> ExperimentResult:
    accs = [float(a) for a in fold_accuracies]
    return ExperimentResult(
        method=method,
        dataset=dataset,
        fold_accuracies=accs,
        mean=float(np.mean(accs)),
        std=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        seed=seed,
        fold_count=fold_count,
        fold_signature=fold_signature,
        config=config,
        wall_seconds=wall_seconds,
    )


# ---------------------------------------------------------------------------
# Method registry


def _network_trainer(loop_fn, mode: str | None):
    def run(train_ds, test_features, test_labels, cfg, seed):
        if cfg.early_stop_patience is not None:
            raise ValueError(
                "early stopping is unavailable under cross-validation: the "
                "patience rule reads holdout labels, which would leak ground "
                "truth into a training decision; use single-split training"
            )
        cfg = replace(cfg, seed=seed, mode=mode) if mode else replace(cfg, seed=seed)
        dup = duplicate(train_ds)
        # Test-fold labels feed the per-epoch accuracy curve only; with early
        # stopping rejected above, no training decision can depend on them.
        holdout = (test_features, np.asarray(test_labels)) if test_labels is not None else None
        model = loop_fn(dup, cfg, holdout=holdout, group_truth=train_ds.true_labels)
        return cooperation.predict(model, test_features), {"model": model}

    return run


def _plknn_trainer(train_ds, test_features, test_labels, cfg, seed):
    k = select_k(train_ds, seed)
    model = plknn_fit(train_ds, k)
    return plknn_predict_batch(model, test_features), {"k": k}


METHOD_REGISTRY = {
    "ncpd": _network_trainer(cooperation.train, "full"),
    "ncpd-no-nc": _network_trainer(cooperation.train, "no_nc"),
    "ncpd-no-pd": _network_trainer(cooperation.train, "no_pd"),
    "uniform-avg": _network_trainer(cooperation.train_uniform_average, None),
    "plknn": _plknn_trainer,
}


def _resolve_trainer(method: str):
    if method not in METHOD_REGISTRY:
        raise ValueError(
            f"unknown method {method!r}; available: {sorted(METHOD_REGISTRY)}"
        )
    return METHOD_REGISTRY[method]


# ---------------------------------------------------------------------------
# Cross-validation


def fold_signature(ds_hash: str, seed: int, fold_count: int) -> str:
    return f"{ds_hash}:{seed}:{fold_count}"


def dataset_fingerprint(ds: PartialLabelDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.features).tobytes())
    h.update(repr(ds.candidate_sets).encode())
    if ds.true_labels is not None:
        h.update(ds.true_labels.tobytes())
    return h.hexdigest()[:16]


def _run_fold(args):
    ds, method, cfg, seed, split, fold = args
    trainer = _resolve_trainer(method)
    train_idx = split.train_indices(fold)
    test_idx = split.test_indices(fold)
    train_ds = subset(ds, train_idx)
    test_features = ds.features[test_idx]
    if cfg.standardize:
        train_ds, stats = standardize_features(train_ds)
        test_features = apply_stats(test_features, stats)
    test_labels = None if ds.true_labels is None else ds.true_labels[test_idx]
    if test_labels is None:
        raise ValueError("cross-validation scoring needs ground-truth labels")
    fold_seed = derive_seed(seed, ROLE_FOLD_TRAIN, fold)
    predictions, extras = trainer(train_ds, test_features, test_labels, cfg, fold_seed)
    accuracy = float(np.mean(np.asarray(predictions) == test_labels))
    return fold, accuracy, extras


def run_cv(
    ds: PartialLabelDataset,
    method: str,
    cfg: TrainConfig,
    seed: int,
    fold_count: int = 10,
    dataset_label: str = "dataset",
    jobs: int = 1,
    collect_extras: list | None = None,
) -> ExperimentResult:
    """Train/score ``method`` on every fold and aggregate the accuracies.

    ``seed`` drives the fold split and the per-fold training seeds; two
    calls with identical arguments return identical results. When
    ``collect_extras`` is given it receives one (fold, extras) pair per fold
    in fold order (curves, checkpointable models, chosen k, ...).
    """
    _resolve_trainer(method)
    started = time.perf_counter()
    split = make_folds(ds.num_instances, fold_count, seed)
    tasks = [(ds, method, cfg, seed, split, f) for f in range(fold_count)]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_fold, tasks))
    else:
        outcomes = [_run_fold(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])
    if collect_extras is not None:
        collect_extras.extend((fold, extras) for fold, _, extras in outcomes)
    return aggregate(
        method=method,
        dataset=dataset_label,
        fold_accuracies=[acc for _, acc, _ in outcomes],
        seed=seed,
        fold_count=fold_count,
        fold_signature=fold_signature(dataset_fingerprint(ds), seed, fold_count),
        config=_config_snapshot(cfg, fold_count),
        wall_seconds=time.perf_counter() - started,
    )


def _config_snapshot(cfg: TrainConfig, fold_count: int) -> dict:
    snap = asdict(cfg)
    snap["fold_count"] = fold_count
    return snap


# ---------------------------------------------------------------------------
# Significance testing


def t_statistic(differences: np.ndarray) -> float:
    d = np.asarray(differences, dtype=np.float64)
    sd = np.std(d, ddof=1)
    mean = float(np.mean(d))
    if sd == 0.0:
        return float(np.copysign(np.inf, mean)) if mean != 0.0 else 0.0
    return float(mean / (sd / np.sqrt(d.shape[0])))


def paired_t_test(a: ExperimentResult, b: ExperimentResult, alpha: float = 0.05) -> str:
    """Two-tailed paired t-test on fold-wise accuracy differences.

    Returns ``superior`` when ``a`` beats ``b`` significantly, ``inferior``
    for the reverse, otherwise ``not significant``. A nonzero constant
    difference (zero variance) is treated as significant, since the t
    statistic diverges. Both results must come from identical fold splits.
    """
    if a.fold_count != b.fold_count or len(a.fold_accuracies) != len(b.fold_accuracies):
        raise ValueError("results have mismatched fold counts")
    if a.fold_signature != b.fold_signature:
        raise ValueError(
            "results come from different fold splits "
            f"({a.fold_signature} vs {b.fold_signature})"
        )
    df = len(a.fold_accuracies) - 1
    if df < 1:
        raise ValueError("need at least two folds")
    critical = _critical_value(alpha, df)
    diffs = np.asarray(a.fold_accuracies) - np.asarray(b.fold_accuracies)
    t = t_statistic(diffs)
    if abs(t) <= critical:
        return NOT_SIGNIFICANT
    return SUPERIOR if np.mean(diffs) > 0 else INFERIOR


def _critical_value(alpha: float, df: int) -> float:
    table = _T_CRITICAL.get(alpha)
    if table is None:
        raise ValueError(
            f"unsupported significance level {alpha}; available: "
            f"{sorted(_T_CRITICAL)}"
        )
    if not 1 <= df <= len(table):
        raise ValueError(f"df={df} outside the tabulated range 1..{len(table)}")
    return table[df - 1]


# ---------------------------------------------------------------------------
# Comparison tables


MARKERS = {SUPERIOR: "•", INFERIOR: "○", NOT_SIGNIFICANT: ""}


@dataclass
class ComparisonTable:
    reference: str
    methods: list[str]
    rows: list[dict]         # dataset, per-method cell dicts

    def to_text(self) -> str:
        headers = ["dataset"] + self.methods
        cells = [headers]
        for row in self.rows:
            line = [row["dataset"]]
            for m in self.methods:
                cell = row["cells"].get(m)
                if cell is None:
                    line.append("-")
                else:
                    line.append(f"{cell['mean']:.3f} ± {cell['std']:.3f} {cell['marker']}".rstrip())
            cells.append(line)
        widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
        lines = []
        for r_i, r in enumerate(cells):
            lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(r)).rstrip())
            if r_i == 0:
                lines.append("  ".join("-" * w for w in widths))
        note = (
            f"reference: {self.reference}; • / ○ marks methods the reference is "
            "significantly superior / inferior to (paired t-test)"
        )
        return "\n".join(lines) + "\n" + note + "\n"

    def to_csv(self) -> str:
        out = ["dataset,method,mean,std,verdict_vs_reference"]
        for row in self.rows:
            for m in self.methods:
                cell = row["cells"].get(m)
                if cell is None:
                    continue
                out.append(
                    f"{row['dataset']},{m},{cell['mean']!r},{cell['std']!r},"
                    f"{cell['verdict']}"
                )
        return "\n".join(out) + "\n"


def comparison_table(
    results: list[ExperimentResult], reference: str, alpha: float = 0.05
) -> ComparisonTable:
    """Mean ± std per (dataset, method) with significance vs the reference."""
    methods = sorted({r.method for r in results}, key=lambda m: (m != reference, m))
    if reference not in methods:
        raise ValueError(f"reference method {reference!r} missing from results")
    datasets = sorted({r.dataset for r in results})
    by_key = {(r.dataset, r.method): r for r in results}
    rows = []
    for dataset in datasets:
        ref = by_key.get((dataset, reference))
        cells = {}
        for m in methods:
            res = by_key.get((dataset, m))
            if res is None:
                continue
            if m == reference or ref is None:
                verdict = ""
            else:
                verdict = paired_t_test(ref, res, alpha)
            cells[m] = {
                "mean": res.mean,
                "std": res.std,
                "verdict": verdict,
                "marker": MARKERS.get(verdict, ""),
            }
        rows.append({"dataset": dataset, "cells": cells})
    return ComparisonTable(reference=reference, methods=methods, rows=rows)


def write_results_jsonl(results: list[ExperimentResult], path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in results))


def read_results_jsonl(path) -> list[ExperimentResult]:
    return [
        ExperimentResult.from_json(line)
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
