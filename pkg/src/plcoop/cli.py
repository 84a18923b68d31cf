"""Command-line interface: generate, train, compare.

Every command is deterministic given its flags; all randomness is derived
from the --seed value. Flag values override a key=value config file, which
overrides built-in defaults. All outputs land under --out (resolved against
$PLCOOP_OUT_ROOT when that is set and --out is relative). Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import cooperation, evaluation
from .cooperation import TrainConfig
from .dataset import (
    CsvSchema,
    DatasetError,
    PartialLabelDataset,
    apply_stats,
    generate_controlled,
    load_csv,
    load_dataset_dir,
    make_folds,
    save_dataset,
    standardize_features,
    subset,
)
from .duplication import duplicate
from .evaluation import (
    METHOD_REGISTRY,
    ExperimentResult,
    comparison_table,
    dataset_fingerprint,
    read_results_jsonl,
    run_cv,
    write_results_jsonl,
)
from .mlp import TrainingDivergedError, save_checkpoint
from .seeding import ROLE_CORRUPT, derive_seed

OUT_ROOT_ENV = "PLCOOP_OUT_ROOT"

TRAIN_DEFAULTS = {
    "batch_size": 128,
    "t_r": 100,
    "epochs": 200,
    "hidden_dim": 128,
    "learning_rate": 1e-3,
    "seed": 0,
    "folds": 10,
    "jobs": 1,
    "standardize": True,
    "early_stop_patience": None,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.handler(args, parser)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plcoop",
        description="Partial label learning: dataset generation, training, comparison",
    )
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("generate", help="corrupt a clean CSV into a partial label dataset")
    gen.add_argument("--input", required=True, help="clean CSV with a single label column")
    gen.add_argument("--label-column", default=None, help="label column name (default: last column)")
    gen.add_argument("--feature-columns", default=None, help="comma-separated feature columns (default: all others)")
    gen.add_argument("--p", type=float, required=True, help="proportion of instances to corrupt, in [0,1]")
    gen.add_argument("--r", type=int, required=True, help="false labels added per corrupted instance")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.set_defaults(handler=_cmd_generate)

    tr = sub.add_parser("train", help="train one method, cross-validated or single split")
    _add_common_train_flags(tr)
    tr.add_argument("--method", required=True, help=f"one of {sorted(METHOD_REGISTRY)}")
    tr.add_argument("--dataset", required=True, help="dataset directory (from generate) or CSV file")
    tr.add_argument("--holdout-frac", type=float, default=None,
                    help="train on a single split instead of cross-validation")
    tr.add_argument("--dump-confidences", default=None,
                    help="per-epoch confidence CSV (single-split runs only)")
    tr.add_argument("--out", required=True)
    tr.set_defaults(handler=_cmd_train)

    cmp_ = sub.add_parser("compare", help="sweep (p, r) cells over methods and tabulate")
    _add_common_train_flags(cmp_)
    cmp_.add_argument("--input", default=None, help="clean CSV to corrupt per sweep cell")
    cmp_.add_argument("--label-column", default=None)
    cmp_.add_argument("--feature-columns", default=None)
    cmp_.add_argument("--methods", default="ncpd,plknn,uniform-avg",
                      help="comma-separated method names")
    cmp_.add_argument("--p-grid", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7")
    cmp_.add_argument("--r-grid", default="1")
    cmp_.add_argument("--reference", default=None,
                      help="reference method for significance markers "
                           "(default: ncpd when present, else the first method)")
    cmp_.add_argument("--results", default=None,
                      help="tabulate existing results.jsonl files instead of sweeping")
    cmp_.add_argument("--out", required=True)
    cmp_.set_defaults(handler=_cmd_compare)
    return parser


def _add_common_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value config file (flags win)")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--t-r", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--early-stop-patience", type=int, default=None)


def _resolve_out(raw: str) -> Path:
    root = os.environ.get(OUT_ROOT_ENV)
    path = Path(raw)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise DatasetError(f"config file not found: {p}")
    values: dict[str, object] = {}
    for raw in p.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetError(f"{p}: malformed config line {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in TRAIN_DEFAULTS:
            raise DatasetError(f"{p}: unknown config key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    default = TRAIN_DEFAULTS[key]
    if key == "early_stop_patience":
        return None if value.lower() in ("", "none") else int(value)
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _merge_settings(args) -> dict:
    settings = dict(TRAIN_DEFAULTS)
    for key, value in _load_config_file(getattr(args, "config", None)).items():
        settings[key] = _coerce(key, value)
    flag_map = {
        "batch_size": args.batch_size,
        "t_r": args.t_r,
        "epochs": args.epochs,
        "hidden_dim": args.hidden_dim,
        "learning_rate": args.learning_rate,
        "seed": args.seed,
        "folds": args.folds,
        "jobs": args.jobs,
        "early_stop_patience": args.early_stop_patience,
    }
    for key, value in flag_map.items():
        if value is not None:
            settings[key] = value
    if args.no_standardize:
        settings["standardize"] = False
    return settings


def _train_config(settings: dict, mode: str = "full") -> TrainConfig:
    return TrainConfig(
        batch_size=settings["batch_size"],
        t_r=settings["t_r"],
        total_epochs=settings["epochs"],
        hidden_dim=settings["hidden_dim"],
        learning_rate=settings["learning_rate"],
        seed=settings["seed"],
        mode=mode,
        standardize=settings["standardize"],
        early_stop_patience=settings["early_stop_patience"],
    )


def _load_any_dataset(path_str: str, label_column, feature_columns) -> tuple[PartialLabelDataset, dict]:
    path = Path(path_str)
    if path.is_dir():
        return load_dataset_dir(path)
    if not path.is_file():
        raise DatasetError(f"dataset not found: {path}")
    schema = _clean_schema(path, label_column, feature_columns)
    ds = load_csv(path, schema)
    manifest = {
        "format": "raw-csv",
        "source": str(path),
        "n_instances": ds.num_instances,
        "n_features": ds.num_features,
        "n_classes": ds.num_classes,
    }
    return ds, manifest


def _clean_schema(path: Path, label_column, feature_columns) -> CsvSchema:
    if label_column is None:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh))
        label_column = header[-1].strip()
    features = feature_columns.split(",") if feature_columns else None
    return CsvSchema(label_column=label_column, feature_columns=features)


def _original_feature_names(path: Path, label_column) -> list[str] | None:
    if not path.is_file():
        return None
    with path.open(newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh))]
    if label_column is None:
        label_column = header[-1]
    return [h for h in header if h != label_column]


# ---------------------------------------------------------------------------
# generate


def _cmd_generate(args, parser) -> int:
    if not 0.0 <= args.p <= 1.0:
        parser.error(f"--p must lie in [0, 1], got {args.p}")
    if args.r < 1:
        parser.error(f"--r must be >= 1, got {args.r}")
    out = _resolve_out(args.out)
    clean, _ = _load_any_dataset(args.input, args.label_column, args.feature_columns)
    corrupted = generate_controlled(clean, args.p, args.r, args.seed)
    if args.feature_columns:
        feature_names = args.feature_columns.split(",")
    else:
        feature_names = _original_feature_names(Path(args.input), args.label_column)
    save_dataset(
        corrupted,
        out,
        feature_names=feature_names,
        manifest_extra={
            "source": str(args.input),
            "p": repr(args.p),
            "r": args.r,
            "seed": args.seed,
        },
    )
    print(f"wrote {out / 'data.csv'} ({corrupted.num_instances} instances, "
          f"{corrupted.num_features} features, {corrupted.num_classes} classes)")
    return 0


# ---------------------------------------------------------------------------
# train


def _cmd_train(args, parser) -> int:
    settings = _merge_settings(args)
    if args.method not in METHOD_REGISTRY:
        parser.error(f"unknown method {args.method!r}; choose from {sorted(METHOD_REGISTRY)}")
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, manifest = _load_any_dataset(args.dataset, None, None)
    if args.dump_confidences and (args.holdout_frac is None or args.method == "plknn"):
        parser.error("--dump-confidences requires --holdout-frac and a network method")
    if args.holdout_frac is not None:
        result, extras = _train_single_split(args, settings, ds)
    else:
        collected: list = []
        result = run_cv(
            ds,
            args.method,
            _train_config(settings),
            seed=settings["seed"],
            fold_count=settings["folds"],
            dataset_label=_dataset_label(args.dataset, manifest),
            jobs=settings["jobs"],
            collect_extras=collected,
        )
        extras = collected
    write_results_jsonl([result], out / "results.jsonl")
    _write_artifacts(out, args.method, extras)
    print(f"{args.method}: accuracy {result.mean:.4f} ± {result.std:.4f} "
          f"over {len(result.fold_accuracies)} fold(s)")
    return 0


def _dataset_label(path_str: str, manifest: dict) -> str:
    name = Path(path_str).name or "dataset"
    p, r = manifest.get("p"), manifest.get("r")
    if p is not None and r is not None:
        return f"{name}(p={float(p):g},r={r})"
    return name


def _train_single_split(args, settings, ds: PartialLabelDataset):
    frac = args.holdout_frac
    if not 0.0 < frac < 1.0:
        raise ValueError(f"--holdout-frac must lie in (0, 1), got {frac}")
    seed = settings["seed"]
    fold_count = max(2, int(round(1.0 / frac)))
    split = make_folds(ds.num_instances, fold_count, seed)
    test_idx = split.test_indices(0)
    train_idx = split.train_indices(0)
    train_ds = subset(ds, train_idx)
    test_features = ds.features[test_idx]
    if settings["standardize"]:
        train_ds, stats = standardize_features(train_ds)
        test_features = apply_stats(test_features, stats)
    test_labels = None if ds.true_labels is None else ds.true_labels[test_idx]

    if args.method == "plknn":
        from .baselines import plknn_fit, plknn_predict_batch, select_k

        k = select_k(train_ds, seed)
        preds = plknn_predict_batch(plknn_fit(train_ds, k), test_features)
        extras = [(0, {"k": k})]
    else:
        mode = {"ncpd": "full", "ncpd-no-nc": "no_nc", "ncpd-no-pd": "no_pd"}.get(args.method)
        cfg = _train_config(settings, mode=mode or "full")
        dup = duplicate(train_ds)
        holdout = (test_features, test_labels) if test_labels is not None else None
        on_batch = None
        dump_fh = None
        if args.dump_confidences:
            dump_fh, on_batch = _confidence_dump_writer(_resolve_out(args.dump_confidences), dup)
        loop = (cooperation.train_uniform_average if args.method == "uniform-avg"
                else cooperation.train)
        try:
            model = loop(dup, cfg, holdout=holdout, group_truth=train_ds.true_labels,
                         on_batch=on_batch)
        finally:
            if dump_fh is not None:
                dump_fh.close()
        preds = cooperation.predict(model, test_features)
        extras = [(0, {"model": model})]

    if test_labels is None:
        raise DatasetError("holdout scoring needs ground-truth labels")
    accuracy = float(np.mean(preds == test_labels))
    result = evaluation.aggregate(
        method=args.method,
        dataset=_dataset_label(args.dataset, {}),
        fold_accuracies=[accuracy],
        seed=seed,
        fold_count=1,
        fold_signature=evaluation.fold_signature(dataset_fingerprint(ds), seed, 1),
        config={**asdict(_train_config(settings)), "holdout_frac": frac},
        wall_seconds=0.0,
    )
    return result, extras


def _confidence_dump_writer(path: Path, dup):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = path.open("w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["epoch", "group", "replica", "label", "loss", "confidence", "is_reliable"])

    def on_batch(record):
        reliable = set() if record.reliable_alpha is None else set(record.reliable_alpha.tolist())
        for pos, replica in enumerate(record.replica_indices.tolist()):
            writer.writerow([
                record.epoch,
                int(dup.group_of[replica]),
                replica,
                int(dup.replica_labels[replica]),
                repr(float(record.losses_alpha[pos])),
                repr(float(record.weights_alpha[pos])),
                int(replica in reliable),
            ])

    return fh, on_batch


def _write_artifacts(out: Path, method: str, extras) -> None:
    for fold, data in extras:
        if "k" in data:
            (out / f"fold{fold}_plknn.json").write_text(
                json.dumps({"k": data["k"]}) + "\n"
            )
        model = data.get("model")
        if model is None:
            continue
        _write_curves(out / f"curves_fold{fold}.csv", model.curves)
        save_checkpoint(model.alpha, out / f"checkpoint_fold{fold}_alpha.npz")
        if model.beta is not None:
            save_checkpoint(model.beta, out / f"checkpoint_fold{fold}_beta.npz")


def _fmt(value: float) -> str:
    return "" if np.isnan(value) else repr(float(value))


def _write_curves(path: Path, curves) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "epoch", "T_t", "train_loss_alpha", "train_loss_beta",
            "val_accuracy", "disambiguation_accuracy", "reliable_fraction",
        ])
        for epoch in range(len(curves.t_value)):
            writer.writerow([
                epoch,
                repr(curves.t_value[epoch]),
                repr(curves.train_loss_alpha[epoch]),
                _fmt(curves.train_loss_beta[epoch]),
                _fmt(curves.val_accuracy[epoch]),
                _fmt(curves.disambiguation_accuracy[epoch]),
                _fmt(curves.reliable_fraction[epoch]),
            ])


# ---------------------------------------------------------------------------
# compare


def _cmd_compare(args, parser) -> int:
    settings = _merge_settings(args)
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHOD_REGISTRY:
            parser.error(f"unknown method {m!r}; choose from {sorted(METHOD_REGISTRY)}")

    if args.results:
        results = []
        for piece in args.results.split(","):
            results.extend(read_results_jsonl(piece.strip()))
        _check_fold_consistency(results)
    else:
        if args.input is None:
            parser.error("compare needs --input (sweep mode) or --results")
        results = _run_sweep(args, parser, settings, out, methods)
    if not results:
        raise ValueError("no results to compare")

    seen = {r.method for r in results}
    reference = args.reference
    if reference is None:
        reference = "ncpd" if "ncpd" in seen else results[0].method
    table = comparison_table(results, reference=reference)
    (out / "comparison.txt").write_text(table.to_text())
    (out / "comparison.csv").write_text(table.to_csv())
    write_results_jsonl(results, out / "results.jsonl")
    _write_sweep_curves(out, results)
    print(table.to_text())
    return 0


def _check_fold_consistency(results: list[ExperimentResult]) -> None:
    by_dataset: dict[str, str] = {}
    for r in results:
        expected = by_dataset.setdefault(r.dataset, r.fold_signature)
        if r.fold_signature != expected:
            raise ValueError(
                f"inconsistent fold seeds for dataset {r.dataset!r}: "
                f"{r.fold_signature} vs {expected}"
            )


def _run_sweep(args, parser, settings, out: Path, methods) -> list[ExperimentResult]:
    try:
        p_grid = [float(v) for v in args.p_grid.split(",") if v.strip()]
        r_grid = [int(v) for v in args.r_grid.split(",") if v.strip()]
    except ValueError:
        parser.error("malformed --p-grid / --r-grid")
    if not p_grid or not r_grid:
        parser.error("empty --p-grid / --r-grid")
    for p in p_grid:
        if not 0.0 <= p <= 1.0:
            parser.error(f"p value {p} outside [0, 1]")

    clean, _ = _load_any_dataset(args.input, args.label_column, args.feature_columns)
    name = Path(args.input).stem
    cache_dir = out / "cache"
    cache_dir.mkdir(exist_ok=True)
    seed = settings["seed"]
    results = []
    for r in r_grid:
        for p in p_grid:
            # Seed each sweep cell by its (p, r) values so a cell's corrupted
            # dataset is stable across different grid selections.
            cell_seed = derive_seed(seed, ROLE_CORRUPT, r, int(round(p * 1000)))
            corrupted = generate_controlled(clean, p, r, cell_seed)
            label = f"{name}(p={p:g},r={r})"
            for method in methods:
                key = _cache_key(corrupted, method, settings)
                cached = cache_dir / f"{key}.json"
                if cached.is_file():
                    results.append(ExperimentResult.from_json(cached.read_text()))
                    print(f"[cache] {label} {method}")
                    continue
                result = run_cv(
                    corrupted,
                    method,
                    _train_config(settings),
                    seed=seed,
                    fold_count=settings["folds"],
                    dataset_label=label,
                    jobs=settings["jobs"],
                )
                cached.write_text(result.to_json())
                results.append(result)
                print(f"[run]   {label} {method}: {result.mean:.4f} ± {result.std:.4f}")
    return results


def _cache_key(ds: PartialLabelDataset, method: str, settings: dict) -> str:
    hashed = {k: v for k, v in settings.items() if k != "jobs"}  # jobs can't change results
    h = hashlib.sha256()
    h.update(dataset_fingerprint(ds).encode())
    h.update(method.encode())
    h.update(json.dumps(hashed, sort_keys=True, default=str).encode())
    return h.hexdigest()[:24]


def _write_sweep_curves(out: Path, results: list[ExperimentResult]) -> None:
    """Accuracy-vs-p CSV per (r, method), for external plotting."""
    import re

    cells: dict[tuple[str, str], list[tuple[float, float, float]]] = {}
    for res in results:
        match = re.search(r"\(p=([0-9.eE+-]+),r=(\d+)\)", res.dataset)
        if not match:
            continue
        p, r = float(match.group(1)), match.group(2)
        cells.setdefault((r, res.method), []).append((p, res.mean, res.std))
    for (r, method), points in sorted(cells.items()):
        lines = ["p,mean,std"]
        for p, mean, std in sorted(points):
            lines.append(f"{p!r},{mean!r},{std!r}")
        (out / f"sweep_r{r}_{method}.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    sys.exit(main())
