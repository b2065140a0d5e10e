"""Shared domain vocabulary: labels, samples, modes and their CSV form."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EGO_ID = 0


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""


class Mode(str, enum.Enum):
    LABELS = "labels"
    DATA = "data"
    SAMPLES = "samples"


@dataclass(frozen=True, order=True)
class Label:
    class_index: int

    def __post_init__(self):
        if isinstance(self.class_index, bool) or not isinstance(self.class_index, (int, np.integer)):
            raise ValidationError(f"class_index must be an integer, got {self.class_index!r}")
        if self.class_index < 0:
            raise ValidationError(f"class_index must be non-negative, got {self.class_index}")
        object.__setattr__(self, "class_index", int(self.class_index))

    def __int__(self) -> int:
        return self.class_index


def label_from_index(k: int, num_classes: int) -> Label:
    if num_classes < 1:
        raise ValidationError(f"num_classes must be >= 1, got {num_classes}")
    if not 0 <= k < num_classes:
        raise ValidationError(f"class index {k} outside [0, {num_classes})")
    return Label(k)


def feature_vector(values: Iterable[float]) -> np.ndarray:
    """Return a read-only float64 copy of ``values``; rejects NaN/Inf."""
    x = np.array(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValidationError("feature vector contains non-finite values")
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class Sample:
    """One observation ``(x, y, t)`` made by vehicle ``source``."""

    data: np.ndarray
    label: Label
    time: float
    source: int = EGO_ID

    def __post_init__(self):
        object.__setattr__(self, "data", feature_vector(self.data))
        if not math.isfinite(self.time):
            raise ValidationError(f"timestamp must be finite, got {self.time}")
        if self.source < 0:
            raise ValidationError(f"vehicle id must be non-negative, got {self.source}")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and self.time == other.time
            and self.source == other.source
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None  # type: ignore[assignment]


SAMPLE_HEADER = ("source", "time", "label")


def write_samples(path: str | Path, samples: Sequence[Sample]) -> None:
    """Write samples as CSV: ``source,time,label,f0..f{d-1}``.

    Floats are written with ``repr`` so they read back bit-exact.
    """
    d = len(samples[0].data) if samples else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(SAMPLE_HEADER) + [f"f{i}" for i in range(d)])
        for s in samples:
            if len(s.data) != d:
                raise ValidationError("samples have mixed dimensionality")
            w.writerow([s.source, repr(float(s.time)), s.label.class_index] + [repr(float(v)) for v in s.data])


def read_samples(path: str | Path) -> list[Sample]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(header[:3]) != SAMPLE_HEADER:
            raise ParseError("missing sample header", 1)
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                out.append(
                    Sample(
                        data=[float(v) for v in row[3:]],
                        label=Label(int(row[2])),
                        time=float(row[1]),
                        source=int(row[0]),
                    )
                )
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
    return out
