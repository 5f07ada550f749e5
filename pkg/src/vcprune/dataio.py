"""LIBSVM dataset loading, splitting and feature standardization.

Datasets are densified on load. Labels are remapped to ``0..K-1`` by the
sorted order of the distinct original labels so that the mapping is the same
for every file of a dataset.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class LibsvmParseError(ValueError):
    """Raised on malformed LIBSVM text; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError(
                f"{features.shape[0]} rows but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("label index out of range [0, n_classes)")
        if self.label_map and sorted(self.label_map.values()) != list(range(self.n_classes)):
            raise ValueError("label_map must be a bijection onto [0, n_classes)")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n_samples

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.n_classes, dict(self.label_map))

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.n_classes, dict(self.label_map))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0

    def validate(self):
        names = ("train", "val", "test")
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        for name, frac in zip(names, fracs):
            if not 0.0 < frac < 1.0:
                raise ValueError(f"empty {name} split: fraction {frac} not in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fracs)}, expected 1")


def _parse_records(text: str):
    labels, rows = [], []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        # LIBSVM files sometimes carry trailing comments
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise LibsvmParseError(f"non-numeric label {parts[0]!r}", line_no) from None
        if not math.isfinite(label):
            raise LibsvmParseError(f"non-finite label {parts[0]!r}", line_no)
        idx, vals = [], []
        prev = 0
        for tok in parts[1:]:
            key, sep, value = tok.partition(":")
            if not sep:
                raise LibsvmParseError(f"token {tok!r} is not idx:val", line_no)
            try:
                j = int(key)
                v = float(value)
            except ValueError:
                raise LibsvmParseError(f"non-numeric token {tok!r}", line_no) from None
            if j <= prev:
                raise LibsvmParseError(
                    f"feature index {j} not ascending (previous {prev})", line_no
                )
            prev = j
            idx.append(j)
            vals.append(v)
        labels.append(label)
        rows.append((idx, vals))
    return labels, rows


def _densify(labels, rows, n_features, label_values) -> Dataset:
    lookup = {v: k for k, v in enumerate(label_values)}
    X = np.zeros((len(rows), n_features))
    for i, (idx, vals) in enumerate(rows):
        if idx:
            X[i, np.asarray(idx) - 1] = vals
    y = np.array([lookup[lab] for lab in labels], dtype=np.int64)
    return Dataset(X, y, len(label_values), dict(lookup))


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_libsvm(source, n_features_hint: int | None = None,
                 label_values: Sequence[float] | None = None) -> Dataset:
    """Parse LIBSVM text (str, bytes or a readable stream) into a dense Dataset.

    ``n_features_hint`` widens the matrix beyond the largest index seen.
    ``label_values`` fixes the original-label table, which is how several files
    of one dataset end up sharing a label map.
    """
    labels, rows = _parse_records(_as_text(source))
    if not rows:
        raise LibsvmParseError("empty input")
    n = max((r[0][-1] for r in rows if r[0]), default=0)
    if n_features_hint is not None:
        n = max(n, int(n_features_hint))
    if label_values is None:
        label_values = sorted(set(labels))
    else:
        label_values = sorted(set(label_values))
        unknown = set(labels) - set(label_values)
        if unknown:
            raise LibsvmParseError(f"labels {sorted(unknown)} not in label table")
    return _densify(labels, rows, n, label_values)


def load_libsvm(path: str | PathLike, n_features_hint: int | None = None) -> Dataset:
    return parse_libsvm(Path(path).read_text(encoding="utf-8"), n_features_hint)


def load_libsvm_files(paths: Iterable[str | PathLike],
                      n_features_hint: int | None = None) -> list[Dataset]:
    """Load several files of one dataset with a common width and label map."""
    parsed = []
    for path in paths:
        text = Path(path).read_text(encoding="utf-8")
        try:
            labels, rows = _parse_records(text)
        except LibsvmParseError as exc:
            raise LibsvmParseError(f"{path}: {exc}") from None
        if not rows:
            raise LibsvmParseError(f"{path}: empty input")
        parsed.append((labels, rows))
    n = max(max((r[0][-1] for r in rows if r[0]), default=0) for _, rows in parsed)
    if n_features_hint is not None:
        n = max(n, int(n_features_hint))
    label_values = sorted({lab for labels, _ in parsed for lab in labels})
    return [_densify(labels, rows, n, label_values) for labels, rows in parsed]


def _format_label(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def to_libsvm(dataset: Dataset) -> str:
    """Serialize back to LIBSVM text; zeros are omitted, values use repr()."""
    inverse = {v: k for k, v in dataset.label_map.items()} if dataset.label_map else None
    out = io.StringIO()
    for row, label in zip(dataset.features, dataset.labels):
        original = inverse[int(label)] if inverse else int(label)
        tokens = [_format_label(original)]
        tokens += [f"{j + 1}:{float(row[j])!r}" for j in np.flatnonzero(row)]
        out.write(" ".join(tokens) + "\n")
    return out.getvalue()


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle rows with ``spec.seed`` and cut them into train/val/test."""
    spec.validate()
    m = dataset.n_samples
    if m == 0:
        raise ValueError("cannot split an empty dataset")
    n_val = int(round(m * spec.val_fraction))
    n_test = int(round(m * spec.test_fraction))
    n_train = m - n_val - n_test
    for name, size in (("train", n_train), ("val", n_val), ("test", n_test)):
        if size <= 0:
            raise ValueError(f"empty {name} split for {m} samples")
    order = np.random.default_rng(spec.seed).permutation(m)
    return (
        dataset.subset(order[:n_train]),
        dataset.subset(order[n_train:n_train + n_val]),
        dataset.subset(order[n_train + n_val:]),
    )


def holdout(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Carve a validation set off a training file (train/test files given)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"holdout fraction {fraction} not in (0, 1)")
    m = dataset.n_samples
    n_val = int(round(m * fraction))
    if n_val == 0 or n_val == m:
        raise ValueError(f"holdout of {fraction} leaves an empty split for {m} samples")
    order = np.random.default_rng(seed).permutation(m)
    return dataset.subset(order[n_val:]), dataset.subset(order[:n_val])


STD_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, dataset: Dataset) -> Dataset:
        return dataset.with_features((dataset.features - self.mean) / self.std)


def fit_scaler(train: Dataset) -> Scaler:
    if train.n_samples == 0:
        raise ValueError("cannot standardize with an empty training set")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    # constant columns are only centred; dividing by the floor would blow up
    # any non-constant value in the other splits
    std = np.where(std < STD_FLOOR, 1.0, std)
    return Scaler(mean, std)


def standardize(train: Dataset, others: Sequence[Dataset] = ()):
    """Scale ``train`` to zero mean / unit variance and apply the same map to ``others``.

    Returns ``(scaled_train, scaled_others, scaler)``.
    """
    scaler = fit_scaler(train)
    return scaler.transform(train), [scaler.transform(d) for d in others], scaler
