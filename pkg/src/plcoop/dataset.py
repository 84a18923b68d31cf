"""Partially labeled datasets: CSV loading, controlled corruption, folds.

A partially labeled instance carries a *candidate set* of labels, exactly one
of which is the hidden ground truth. Clean data is the degenerate case where
every candidate set is a singleton. The controlled corruption protocol turns
a clean dataset into a benchmark: a proportion ``p`` of instances get ``r``
uniformly drawn false labels added next to their true label.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import ROLE_CORRUPT, ROLE_FOLDS, rng_for

MANIFEST_FORMAT = "plcoop-dataset-v1"
CANDIDATE_SEPARATOR = "|"


class DatasetError(ValueError):
    """Raised for malformed dataset files or invalid dataset arguments."""


@dataclass(frozen=True)
class PartialLabelDataset:
    """Feature matrix plus one candidate label set per instance.

    ``true_labels`` is present for clean and generated/controlled data (for
    truly partial data the truth is unknown) and is reserved for evaluation;
    training code never reads it.
    """

    features: np.ndarray                       # (N, d) float64
    candidate_sets: tuple[tuple[int, ...], ...]  # N sorted tuples, subsets of [0, c)
    num_classes: int
    true_labels: np.ndarray | None = None      # (N,) int64 or None
    label_names: tuple[str, ...] | None = None  # dense code -> original token

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        sets = tuple(tuple(sorted(int(y) for y in s)) for s in self.candidate_sets)
        object.__setattr__(self, "candidate_sets", sets)
        if self.true_labels is not None:
            truth = np.asarray(self.true_labels, dtype=np.int64)
            truth.setflags(write=False)
            object.__setattr__(self, "true_labels", truth)
        self._validate()

    def _validate(self):
        n = self.features.shape[0]
        if len(self.candidate_sets) != n:
            raise DatasetError(
                f"{n} feature rows but {len(self.candidate_sets)} candidate sets"
            )
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        for i, s in enumerate(self.candidate_sets):
            if not s:
                raise DatasetError(f"instance {i}: empty candidate set")
            if len(set(s)) != len(s):
                raise DatasetError(f"instance {i}: duplicate candidate labels")
            if s[0] < 0 or s[-1] >= self.num_classes:
                raise DatasetError(
                    f"instance {i}: candidate label outside [0, {self.num_classes})"
                )
        if self.true_labels is not None:
            if self.true_labels.shape != (n,):
                raise DatasetError("true_labels length does not match feature rows")
            for i, (y, s) in enumerate(zip(self.true_labels, self.candidate_sets)):
                if int(y) not in s:
                    raise DatasetError(
                        f"instance {i}: true label {int(y)} not in candidate set {s}"
                    )

    @property
    def num_instances(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class FoldSplit:
    """Balanced random partition of instance indices into folds."""

    fold_count: int
    assignments: np.ndarray  # (N,) fold index per instance

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


@dataclass
class CsvSchema:
    """Column layout of an input CSV.

    Exactly one of ``label_column`` (clean data) or ``candidate_column``
    (pipe-separated label tokens, e.g. ``"2|5|7"``) must be given.
    ``feature_columns`` defaults to every remaining column. ``classes`` can
    pin the token -> code mapping; tokens outside it are rejected.
    """

    label_column: str | None = None
    candidate_column: str | None = None
    true_label_column: str | None = None
    feature_columns: list[str] | None = None
    classes: list[str] | None = None

    def __post_init__(self):
        if (self.label_column is None) == (self.candidate_column is None):
            raise DatasetError(
                "schema needs exactly one of label_column or candidate_column"
            )


@dataclass
class _LabelCodec:
    """Dense re-indexing of label tokens in first-appearance order."""

    code_of: dict[str, int] = field(default_factory=dict)
    frozen: bool = False

    @classmethod
    def fixed(cls, classes: list[str]) -> "_LabelCodec":
        return cls(code_of={tok: i for i, tok in enumerate(classes)}, frozen=True)

    def encode(self, token: str, line_no: int) -> int:
        token = token.strip()
        if not token:
            raise DatasetError(f"line {line_no}: empty label token")
        if token not in self.code_of:
            if self.frozen:
                raise DatasetError(f"line {line_no}: unknown label token {token!r}")
            self.code_of[token] = len(self.code_of)
        return self.code_of[token]

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self.code_of, key=self.code_of.get))


def load_csv(path: str | Path, schema: CsvSchema) -> PartialLabelDataset:
    """Load a clean or partially labeled CSV (header row required).

    Labels are re-indexed to dense integer codes by first appearance (or by
    ``schema.classes`` when given); the mapping is kept on the dataset as
    ``label_names``. Errors carry the offending file line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    codec = _LabelCodec.fixed(schema.classes) if schema.classes else _LabelCodec()

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        col_index = {name: i for i, name in enumerate(header)}

        label_like = [
            c for c in (schema.label_column, schema.candidate_column, schema.true_label_column)
            if c is not None
        ]
        for c in label_like:
            if c not in col_index:
                raise DatasetError(f"{path}: column {c!r} not in header {header}")
        if schema.feature_columns is None:
            feature_cols = [c for c in header if c not in label_like]
        else:
            feature_cols = list(schema.feature_columns)
            for c in feature_cols:
                if c not in col_index:
                    raise DatasetError(f"{path}: feature column {c!r} not in header")
        if not feature_cols:
            raise DatasetError(f"{path}: no feature columns")

        rows: list[list[float]] = []
        sets: list[tuple[int, ...]] = []
        truths: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"line {line_no}: expected {len(header)} cells, found {len(row)}"
                )
            feats = []
            for c in feature_cols:
                cell = row[col_index[c]].strip()
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"line {line_no}: non-numeric value {cell!r} in feature column {c!r}"
                    ) from None
            rows.append(feats)

            if schema.label_column is not None:
                code = codec.encode(row[col_index[schema.label_column]], line_no)
                sets.append((code,))
                if schema.true_label_column is None:
                    truths.append(code)  # clean data: the label is the truth
            else:
                cell = row[col_index[schema.candidate_column]].strip()
                tokens = [t for t in cell.split(CANDIDATE_SEPARATOR) if t.strip()]
                if not tokens:
                    raise DatasetError(f"line {line_no}: empty candidate set cell")
                sets.append(tuple(codec.encode(t, line_no) for t in tokens))

            if schema.true_label_column is not None:
                truths.append(codec.encode(row[col_index[schema.true_label_column]], line_no))

    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return PartialLabelDataset(
        features=np.asarray(rows, dtype=np.float64),
        candidate_sets=tuple(sets),
        num_classes=len(codec.code_of),
        true_labels=np.asarray(truths, dtype=np.int64) if truths else None,
        label_names=codec.names(),
    )


def generate_controlled(
    clean: PartialLabelDataset, p: float, r: int, seed: int
) -> PartialLabelDataset:
    """Corrupt a clean dataset: round(p*N) instances get r false labels.

    The corrupted instances are chosen uniformly at random; each receives a
    candidate set of size r+1 holding its true label plus r distinct false
    labels drawn uniformly without replacement. round() is half-up, and the
    whole operation is a pure function of (clean, p, r, seed).
    """
    if not 0.0 <= p <= 1.0:
        raise DatasetError(f"p must lie in [0, 1], got {p}")
    if r < 1:
        raise DatasetError(f"r must be a positive integer, got {r}")
    truth = _require_truth(clean, "controlled corruption")
    if any(len(s) != 1 for s in clean.candidate_sets):
        raise DatasetError("controlled corruption needs singleton candidate sets")
    c = clean.num_classes
    if r > c - 1:
        raise DatasetError(f"r={r} exceeds c-1={c - 1}: not enough false labels")

    n = clean.num_instances
    num_corrupt = int(np.floor(p * n + 0.5))
    rng = rng_for(seed, ROLE_CORRUPT)
    chosen = np.sort(rng.choice(n, size=num_corrupt, replace=False))

    sets = list(clean.candidate_sets)
    all_labels = np.arange(c)
    for i in chosen:
        y = int(truth[i])
        false_pool = all_labels[all_labels != y]
        false = rng.choice(false_pool, size=r, replace=False)
        sets[int(i)] = tuple(sorted([y, *false.tolist()]))

    return PartialLabelDataset(
        features=clean.features,
        candidate_sets=tuple(sets),
        num_classes=c,
        true_labels=truth,
        label_names=clean.label_names,
    )


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray


def apply_stats(features: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Transform raw feature rows with previously computed column stats."""
    features = np.asarray(features, dtype=np.float64)
    if stats.mean.shape != (features.shape[1],):
        raise DatasetError(
            f"stats dimensionality {stats.mean.shape} does not match d={features.shape[1]}"
        )
    safe = np.where(stats.std < 1e-12, 1.0, stats.std)
    out = (features - stats.mean) / safe
    out[:, stats.std < 1e-12] = 0.0
    return out


def standardize_features(
    ds: PartialLabelDataset, stats: FeatureStats | None = None
) -> tuple[PartialLabelDataset, FeatureStats]:
    """Z-score each column; near-constant columns (std < 1e-12) map to 0.

    When ``stats`` is None they are computed from ``ds`` (population std).
    Pass the returned stats to transform held-out data with training-fold
    statistics.
    """
    if stats is None:
        stats = FeatureStats(
            mean=ds.features.mean(axis=0), std=ds.features.std(axis=0)
        )
    return (
        PartialLabelDataset(
            features=apply_stats(ds.features, stats),
            candidate_sets=ds.candidate_sets,
            num_classes=ds.num_classes,
            true_labels=ds.true_labels,
            label_names=ds.label_names,
        ),
        stats,
    )


def make_folds(n: int, fold_count: int, seed: int) -> FoldSplit:
    """Random balanced partition: fold sizes differ by at most one."""
    if fold_count < 2:
        raise DatasetError(f"fold_count must be >= 2, got {fold_count}")
    if n < fold_count:
        raise DatasetError(f"cannot split {n} instances into {fold_count} folds")
    rng = rng_for(seed, ROLE_FOLDS)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % fold_count
    return FoldSplit(fold_count=fold_count, assignments=assignments)


def subset(ds: PartialLabelDataset, indices: np.ndarray) -> PartialLabelDataset:
    indices = np.asarray(indices)
    return PartialLabelDataset(
        features=ds.features[indices],
        candidate_sets=tuple(ds.candidate_sets[int(i)] for i in indices),
        num_classes=ds.num_classes,
        true_labels=None if ds.true_labels is None else ds.true_labels[indices],
        label_names=ds.label_names,
    )


# ---------------------------------------------------------------------------
# On-disk format for generated datasets: data.csv + manifest.txt


def _token(ds: PartialLabelDataset, code: int) -> str:
    if ds.label_names is not None:
        return ds.label_names[code]
    return str(code)


def save_dataset(
    ds: PartialLabelDataset,
    out_dir: str | Path,
    feature_names: list[str] | None = None,
    manifest_extra: dict | None = None,
) -> Path:
    """Write ``data.csv`` (+ ``manifest.txt``) under ``out_dir``.

    Floats are written with full ``repr`` precision so a reload is lossless
    and regeneration with identical inputs is byte-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(ds.num_features)]
    if len(feature_names) != ds.num_features:
        raise DatasetError("feature_names length does not match d")

    csv_path = out_dir / "data.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [*feature_names, "candidates"]
        if ds.true_labels is not None:
            header.append("true_label")
        writer.writerow(header)
        for i in range(ds.num_instances):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(
                CANDIDATE_SEPARATOR.join(_token(ds, y) for y in ds.candidate_sets[i])
            )
            if ds.true_labels is not None:
                row.append(_token(ds, int(ds.true_labels[i])))
            writer.writerow(row)

    manifest = {
        "format": MANIFEST_FORMAT,
        "n_instances": ds.num_instances,
        "n_features": ds.num_features,
        "n_classes": ds.num_classes,
        "feature_columns": ",".join(feature_names),
        "label_map": json.dumps(
            {_token(ds, code): code for code in range(ds.num_classes)}
        ),
        "has_true_labels": str(ds.true_labels is not None).lower(),
    }
    manifest.update(manifest_extra or {})
    write_manifest(out_dir / "manifest.txt", manifest)
    return csv_path


def write_manifest(path: str | Path, entries: dict) -> None:
    lines = [f"{k}={entries[k]}" for k in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    entries = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetError(f"{path}: malformed manifest line {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value
    return entries


def load_dataset_dir(path: str | Path) -> tuple[PartialLabelDataset, dict]:
    """Load a dataset directory produced by :func:`save_dataset`."""
    path = Path(path)
    manifest = read_manifest(path / "manifest.txt")
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DatasetError(
            f"{path}: unsupported dataset format {manifest.get('format')!r}"
        )
    label_map = json.loads(manifest["label_map"])
    classes = sorted(label_map, key=label_map.get)
    schema = CsvSchema(
        candidate_column="candidates",
        true_label_column="true_label" if manifest.get("has_true_labels") == "true" else None,
        feature_columns=manifest["feature_columns"].split(","),
        classes=classes,
    )
    return load_csv(path / "data.csv", schema), manifest


def _require_truth(ds: PartialLabelDataset, what: str) -> np.ndarray:
    if ds.true_labels is None:
        raise DatasetError(f"{what} requires ground-truth labels")
    return ds.true_labels
