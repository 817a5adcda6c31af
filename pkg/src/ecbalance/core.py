"""Subject records, the combined RCT + external-control dataset, and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateArms,
    EcTreatedSubject,
    EmptyInput,
    InconsistentDimension,
    IoError,
    MissingColumn,
    ParseError,
)

DEFAULT_COLUMNS = {"y": "y", "a": "a", "z": "z"}


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: outcome ``y``, treatment ``a``, source ``z`` (1 = RCT) and covariates ``x``."""

    y: float
    a: int
    z: int
    x: tuple[float, ...]


class CombinedDataset:
    """Validated RCT + EC sample held as read-only numpy arrays.

    Subjects keep their input order so per-subject quantities (propensity
    scores, weights) can be joined back to the source rows.
    """

    __slots__ = ("y", "a", "z", "X", "covariate_names", "n11", "n10", "n2")

    def __init__(self, y, a, z, X, covariate_names=None):
        y = np.asarray(y, dtype=float)
        a = np.asarray(a)
        z = np.asarray(z)
        X = np.asarray(X, dtype=float)
        if y.ndim != 1 or y.size == 0:
            raise EmptyInput("dataset has no records")
        n = y.size
        if X.ndim == 1 and n > 0 and X.size == 0:
            X = X.reshape(n, 0)
        if X.ndim != 2 or X.shape[0] != n or a.shape != (n,) or z.shape != (n,):
            raise InconsistentDimension(
                f"array shapes disagree: y {y.shape}, a {a.shape}, z {z.shape}, X {X.shape}"
            )
        for name, v in (("a", a), ("z", z)):
            if not np.all((v == 0) | (v == 1)):
                raise ParseError(int(np.argmax((v != 0) & (v != 1))) + 1, name, "must be 0 or 1")
        if not np.all(np.isfinite(y)):
            raise ParseError(int(np.argmax(~np.isfinite(y))) + 1, "y", "non-finite outcome")
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise ParseError(int(bad[0]) + 1, f"x[{int(bad[1])}]", "non-finite covariate")
        a = a.astype(np.int8)
        z = z.astype(np.int8)
        ec_treated = (z == 0) & (a == 1)
        if ec_treated.any():
            raise EcTreatedSubject(
                f"record {int(np.argmax(ec_treated)) + 1} has z=0 and a=1; "
                "external controls must be untreated"
            )
        n11 = int(np.sum((z == 1) & (a == 1)))
        n10 = int(np.sum((z == 1) & (a == 0)))
        n2 = int(np.sum(z == 0))
        if n11 == 0:
            raise DegenerateArms("no treated RCT subjects (n11 = 0)")
        if n10 + n2 == 0:
            raise DegenerateArms("no control subjects (n10 + n2 = 0)")

        p = X.shape[1]
        if covariate_names is None:
            covariate_names = tuple(f"x{j + 1}" for j in range(p))
        covariate_names = tuple(covariate_names)
        if len(covariate_names) != p:
            raise InconsistentDimension(f"{len(covariate_names)} covariate names for {p} columns")

        for arr in (y, a, z, X):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "covariate_names", covariate_names)
        object.__setattr__(self, "n11", n11)
        object.__setattr__(self, "n10", n10)
        object.__setattr__(self, "n2", n2)

    def __setattr__(self, name, value):
        raise AttributeError("CombinedDataset is immutable")

    def __len__(self):
        return self.y.size

    def __repr__(self):
        return (
            f"CombinedDataset(n11={self.n11}, n10={self.n10}, n2={self.n2}, "
            f"p={self.p}, covariates={self.covariate_names})"
        )

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n1(self) -> int:
        return self.n11 + self.n10

    @property
    def lam(self) -> float:
        """RCT share of the pooled sample, N1 / N."""
        return self.n1 / len(self)

    @property
    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(float(self.y[i]), int(self.a[i]), int(self.z[i]), tuple(map(float, self.X[i])))
            for i in range(len(self))
        ]

    def group_masks(self):
        """Boolean masks for (RCT treated, RCT control, EC)."""
        rct = self.z == 1
        treated = rct & (self.a == 1)
        return treated, rct & (self.a == 0), ~rct


def build_dataset(records: Iterable[SubjectRecord], covariate_names=None) -> CombinedDataset:
    records = list(records)
    if not records:
        raise EmptyInput("no records supplied")
    p = len(records[0].x)
    for i, r in enumerate(records):
        if len(r.x) != p:
            raise InconsistentDimension(f"record {i + 1} has {len(r.x)} covariates, expected {p}")
    y = np.array([r.y for r in records], dtype=float)
    a = np.array([r.a for r in records])
    z = np.array([r.z for r in records])
    X = np.array([r.x for r in records], dtype=float).reshape(len(records), p)
    return CombinedDataset(y, a, z, X, covariate_names)


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise IoError(f"file not found: {path}") from exc
    except OSError as exc:
        raise IoError(str(exc)) from exc
    with fh:
        lines = (line for line in fh if not line.startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None:
            raise EmptyInput(f"{path} is empty")
        rows = [row for row in reader if row]
    return [h.strip() for h in header], rows


def _parse_float(text, row, column):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(row, column, f"{text!r} is not numeric") from None
    if not math.isfinite(v):
        raise ParseError(row, column, f"{text!r} is not finite")
    return v


def _parse_indicator(text, row, column):
    v = _parse_float(text, row, column)
    if v not in (0.0, 1.0):
        raise ParseError(row, column, f"{text!r} is not 0 or 1")
    return int(v)


def ingest_csv(
    path,
    columns: Mapping[str, str] | None = None,
    covariates: Sequence[str] | None = None,
    exclude: Sequence[str] = (),
) -> CombinedDataset:
    """Read a dataset from CSV.

    ``columns`` remaps the logical ``y``/``a``/``z`` names to file headers.
    When ``covariates`` is None every other column not listed in ``exclude``
    is a covariate. Lines starting with ``#`` are metadata and skipped.
    Row numbers in :class:`ParseError` count data rows from 1.
    """
    mapping = {**DEFAULT_COLUMNS, **(columns or {})}
    header, rows = _read_rows(path)
    index = {name: j for j, name in enumerate(header)}
    for key in ("y", "a", "z"):
        if mapping[key] not in index:
            raise MissingColumn(f"column {mapping[key]!r} (for {key}) not in header {header}")
    if covariates is None:
        skip = {mapping["y"], mapping["a"], mapping["z"], *exclude}
        covariates = [h for h in header if h not in skip]
    for c in covariates:
        if c not in index:
            raise MissingColumn(f"covariate column {c!r} not in header {header}")
    if not rows:
        raise EmptyInput(f"{path} has a header but no data rows")

    records = []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ParseError(r, "*", f"expected {len(header)} fields, got {len(row)}")
        cell = lambda name: row[index[name]].strip()  # noqa: E731
        y = _parse_float(cell(mapping["y"]), r, mapping["y"])
        a = _parse_indicator(cell(mapping["a"]), r, mapping["a"])
        z = _parse_indicator(cell(mapping["z"]), r, mapping["z"])
        x = tuple(_parse_float(cell(c), r, c) for c in covariates)
        records.append(SubjectRecord(y, a, z, x))
    return build_dataset(records, covariate_names=covariates)


def read_numeric_column(path, name: str) -> np.ndarray:
    header, rows = _read_rows(path)
    if name not in header:
        raise MissingColumn(f"column {name!r} not in header {header}")
    j = header.index(name)
    return np.array([_parse_float(row[j].strip(), r, name) for r, row in enumerate(rows, start=1)])


def write_csv(dataset: CombinedDataset, path, extra: Mapping[str, Sequence[float]] | None = None,
              metadata: Mapping[str, object] | None = None) -> None:
    """Write ``dataset`` as CSV with full float precision (lossless round trip)."""
    extra = dict(extra or {})
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key}: {value}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "a", "z", *dataset.covariate_names, *extra])
            cols = [np.asarray(v, dtype=float) for v in extra.values()]
            for i in range(len(dataset)):
                w.writerow(
                    [repr(float(dataset.y[i])), int(dataset.a[i]), int(dataset.z[i])]
                    + [repr(float(v)) for v in dataset.X[i]]
                    + [repr(float(c[i])) for c in cols]
                )
    except OSError as exc:
        raise IoError(str(exc)) from exc
