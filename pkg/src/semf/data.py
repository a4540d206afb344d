"""Datasets, source partitions, train/valid/test splits and z-score scaling."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataError

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
EARLY_STOP_FRACTION = 0.15


@dataclass(frozen=True)
class Split:
    train_idx: np.ndarray
    valid_idx: np.ndarray
    test_idx: np.ndarray
    early_stop_idx: np.ndarray
    fractions: tuple = DEFAULT_FRACTIONS + (0.0,)

    def fit_idx(self, early_stopping: bool) -> np.ndarray:
        """Rows a learner trains on: the full train segment, or train plus
        the carved early-stop rows for learners that do not early stop."""
        if early_stopping or len(self.early_stop_idx) == 0:
            return self.train_idx
        return np.concatenate([self.train_idx, self.early_stop_idx])


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    outcome: np.ndarray
    source_partition: tuple
    split: Split | None = None
    feature_names: tuple = ()
    outcome_name: str = "y"
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.outcome, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError(f"features {X.shape} and outcome {y.shape} are not aligned")
        if X.shape[0] < 10:
            raise DataError(f"need at least 10 rows, got {X.shape[0]}")
        check_partition(self.source_partition, X.shape[1])
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "source_partition", tuple(tuple(int(c) for c in g) for g in self.source_partition))
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{j + 1}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_sources(self) -> int:
        return len(self.source_partition)

    def sources(self, idx=None) -> list[np.ndarray]:
        """Feature blocks, one per source, optionally restricted to rows `idx`."""
        X = self.features if idx is None else self.features[idx]
        return [X[:, list(g)] for g in self.source_partition]

    def with_split(self, split: Split) -> "Dataset":
        return replace(self, split=split)


def check_partition(groups: Sequence[Sequence[int]], n_columns: int) -> None:
    seen = [c for g in groups for c in g]
    if any(len(g) == 0 for g in groups):
        raise DataError("empty source group")
    if len(seen) != len(set(seen)):
        raise DataError("source groups overlap")
    if sorted(seen) != list(range(n_columns)):
        raise DataError(f"source groups must cover columns 0..{n_columns - 1} exactly")


def one_per_column(n_columns: int) -> tuple:
    return tuple((j,) for j in range(n_columns))


def drop_duplicate_rows(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove repeated (features, outcome) rows, keeping first occurrences in order."""
    full = np.column_stack([X, y])
    _, first = np.unique(full, axis=0, return_index=True)
    keep = np.sort(first)
    return X[keep], y[keep]


def load_csv(path, outcome_column: str, drop_duplicates: bool = True) -> Dataset:
    """Read a header-first numeric CSV into an unscaled :class:`Dataset`.

    Every non-outcome column becomes its own source.
    """
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"{path}: duplicate column names {dupes}")
        if outcome_column not in header:
            raise DataError(f"{path}: outcome column {outcome_column!r} not in header")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(raw)}")
            vals = []
            for name, cell in zip(header, raw):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {name!r} has non-numeric value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    j = header.index(outcome_column)
    y = table[:, j]
    X = np.delete(table, j, axis=1)
    names = tuple(h for h in header if h != outcome_column)
    if drop_duplicates:
        X, y = drop_duplicate_rows(X, y)
    if np.ptp(y) == 0:
        raise DataError(f"{path}: outcome column {outcome_column!r} is constant")
    return Dataset(X, y, one_per_column(X.shape[1]), feature_names=names,
                   outcome_name=outcome_column, name=os.path.splitext(os.path.basename(path))[0])


def make_split(n: int, fractions=DEFAULT_FRACTIONS, seed: int = 0, carve_early_stop: bool = False,
               rng: np.random.Generator | None = None) -> Split:
    """Shuffle ``range(n)`` into train/valid/test (and optionally early-stop) indices.

    train gets ``floor(n*f_train)``, valid ``floor(n*f_valid)``, test the rest.
    Carving moves ``round(0.15*|train|)`` (half rounds up) rows from the end of
    the shuffled train list into the early-stop segment.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise DataError("fractions must be (train, valid, test)")
    if any(not 0 < f < 1 for f in fractions):
        raise DataError(f"fractions must lie in (0, 1): {fractions}")
    if abs(sum(fractions) - 1) > 1e-9:
        raise DataError(f"fractions must sum to 1: {fractions}")
    n_train = math.floor(n * fractions[0])
    n_valid = math.floor(n * fractions[1])
    n_test = n - n_train - n_valid
    n_es = math.floor(EARLY_STOP_FRACTION * n_train + 0.5) if carve_early_stop else 0
    if min(n_train - n_es, n_valid, n_test) < 1 or (carve_early_stop and n_es < 1):
        raise DataError(f"n={n} too small for fractions {fractions}: a segment would be empty")
    rng = np.random.default_rng(seed) if rng is None else rng
    perm = rng.permutation(n)
    train = perm[:n_train]
    es = train[n_train - n_es:]
    return Split(
        train_idx=train[:n_train - n_es],
        valid_idx=perm[n_train:n_train + n_valid],
        test_idx=perm[n_train + n_valid:],
        early_stop_idx=es,
        fractions=fractions + ((EARLY_STOP_FRACTION if carve_early_stop else 0.0),),
    )


@dataclass(frozen=True)
class Scaler:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    outcome_mean: float
    outcome_std: float

    def transform_features(self, X):
        return (np.asarray(X, dtype=float) - self.feature_mean) / self.feature_std

    def inverse_features(self, Z):
        return np.asarray(Z, dtype=float) * self.feature_std + self.feature_mean

    def transform_outcome(self, y):
        return (np.asarray(y, dtype=float) - self.outcome_mean) / self.outcome_std

    def inverse_outcome(self, y):
        return np.asarray(y, dtype=float) * self.outcome_std + self.outcome_mean

    def inverse_scale(self, width):
        """Map a length/spread in scaled units back to outcome units."""
        return np.asarray(width, dtype=float) * self.outcome_std

    @classmethod
    def fit(cls, X, y) -> "Scaler":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] < 2:
            raise DataError("need at least two rows to fit a scaler")
        sx = X.std(axis=0, ddof=1)
        sy = float(y.std(ddof=1))
        bad = np.flatnonzero(~(sx > 0))
        if bad.size:
            raise DataError(f"zero-variance feature column(s) {bad.tolist()} on the training segment")
        if not sy > 0:
            raise DataError("zero-variance outcome on the training segment")
        return cls(X.mean(axis=0), sx, float(y.mean()), sy)


def standardize(ds: Dataset) -> tuple[Dataset, Scaler]:
    """Z-score features and outcome with statistics from the training rows only.

    The training rows include any carved early-stop rows, so every learner in
    a run shares one scaler.
    """
    if ds.split is None:
        raise DataError("dataset has no split; call make_split first")
    tr = ds.split.fit_idx(early_stopping=False)
    scaler = Scaler.fit(ds.features[tr], ds.outcome[tr])
    scaled = replace(ds, features=scaler.transform_features(ds.features),
                     outcome=scaler.transform_outcome(ds.outcome))
    return scaled, scaler
