"""Tabular datasets, a Gaussian-cluster surrogate, and stratified partitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ParseError, ValidationError


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or len(X) != len(y):
            raise ValidationError("X must be (n, d) and y must be (n,)")
        if self.num_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.num_classes}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("features contain non-finite values")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValidationError("label outside [0, num_classes)")
        if np.any(np.bincount(y, minlength=self.num_classes) == 0):
            raise ValidationError("every class needs at least one sample")
        names = self.class_names or tuple(str(k) for k in range(self.num_classes))
        if len(names) != self.num_classes:
            raise ValidationError("class_names length must equal num_classes")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "class_names", tuple(names))

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.y)

    def minmax_scaled(self) -> "Dataset":
        lo, hi = self.X.min(axis=0), self.X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return Dataset((self.X - lo) / span, self.y, self.num_classes, self.class_names)


@dataclass(frozen=True)
class Partition:
    offline: tuple[int, ...]
    online_pool: tuple[int, ...]
    test: tuple[int, ...]


def load_csv(path: str | Path, label_column: int | str = -1, header: bool = False) -> Dataset:
    """Read a comma-separated numeric table with one categorical label column.

    Labels are mapped to dense indices in order of first appearance. A string
    ``label_column`` requires ``header=True``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if header:
        if not rows:
            raise ParseError("empty file", 1)
        lineno, head = rows.pop(0)
        head = [h.strip() for h in head]
    else:
        head = None
    if not rows:
        raise ParseError("no data rows")

    width = len(rows[0][1])
    if head is not None and len(head) != width:
        raise ParseError(f"header has {len(head)} fields, data has {width}", rows[0][0])
    if isinstance(label_column, str):
        if head is None:
            raise ParseError(f"label column {label_column!r} given by name but file has no header")
        if label_column not in head:
            raise ParseError(f"unknown label column {label_column!r}")
        col = head.index(label_column)
    else:
        col = label_column if label_column >= 0 else width + label_column
        if not 0 <= col < width:
            raise ParseError(f"label column {label_column} out of range for {width} fields")
    if width < 2:
        raise ParseError("need at least one feature column and a label column", rows[0][0])

    names: dict[str, int] = {}
    X, y = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", lineno)
        feats = row[:col] + row[col + 1:]
        try:
            X.append([float(v) for v in feats])
        except ValueError:
            bad = next(v for v in feats if not _is_float(v))
            raise ParseError(f"non-numeric feature {bad!r}", lineno) from None
        name = row[col].strip()
        y.append(names.setdefault(name, len(names)))
    if not np.all(np.isfinite(X)):
        raise ParseError("non-finite feature value")
    return Dataset(np.asarray(X), np.asarray(y), len(names), tuple(names))


def _is_float(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def synthesize(num_classes: int, num_features: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters around standard-normal class means."""
    if num_classes < 2 or num_features < 1 or per_class < 1:
        raise ValidationError("need num_classes >= 2, num_features >= 1, per_class >= 1")
    if not spread > 0:
        raise ValidationError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, num_features))
    X = np.repeat(means, per_class, axis=0) + spread * rng.standard_normal((num_classes * per_class, num_features))
    y = np.repeat(np.arange(num_classes), per_class)
    order = rng.permutation(len(y))
    return Dataset(X[order], y[order], num_classes, tuple(f"class{k}" for k in range(num_classes)))


def _apportion(total: int, shares: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation of ``total`` by ``shares``, respecting ``caps``."""
    ideal = total * shares
    alloc = np.minimum(np.floor(ideal).astype(np.int64), caps)
    rem = ideal - alloc
    while alloc.sum() < total:
        open_ = alloc < caps
        if not open_.any():
            raise ValidationError("not enough samples to apportion")
        k = int(np.argmax(np.where(open_, rem, -np.inf)))
        alloc[k] += 1
        rem[k] -= 1.0
    return alloc


def partition(ds: Dataset, offline_size: int, test_size: int, seed: int) -> Partition:
    """Stratified offline / test split; everything left over is the online pool."""
    n = len(ds)
    if offline_size < 1 or test_size < 1:
        raise ValidationError("offline_size and test_size must be >= 1")
    if offline_size + test_size > n:
        raise ValidationError(f"offline_size + test_size = {offline_size + test_size} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    counts = np.bincount(ds.y, minlength=ds.num_classes)
    shares = counts / n
    n_off = _apportion(offline_size, shares, counts)
    n_test = _apportion(test_size, shares, counts - n_off)

    offline, test, pool = [], [], []
    for k in range(ds.num_classes):
        idx = rng.permutation(np.flatnonzero(ds.y == k))
        offline.extend(idx[: n_off[k]])
        test.extend(idx[n_off[k]: n_off[k] + n_test[k]])
        pool.extend(idx[n_off[k] + n_test[k]:])
    # interleave classes so list order carries no class structure
    return Partition(
        offline=tuple(int(i) for i in rng.permutation(offline)),
        online_pool=tuple(int(i) for i in rng.permutation(pool)),
        test=tuple(int(i) for i in rng.permutation(test)),
    )
