"""Tabular datasets, column selections and train/test partitions.

A :class:`Dataset` is immutable after loading. Numeric columns are stored as
float64 arrays, categorical columns as integer level codes. Selections may
name plain numeric columns or derived expressions::

    a:b:c   row-wise product of numeric columns a, b and c
    a^2     second power of numeric column a
"""

from __future__ import annotations

import csv
import gzip
import io
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# Cells treated as missing rather than as categorical levels.
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})

_NAME_RE = re.compile(r"^[A-Za-z_.][A-Za-z0-9_.]*$")


class DatasetError(ValueError):
    """Raised for unreadable files, bad column references and bad partitions."""


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero (x >= 0)."""
    # guard against 0.8 * 4177 = 3341.6000000000004 style noise
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True)
class Dataset:
    name: str
    columns: tuple[tuple[str, str], ...]
    numeric: dict[str, np.ndarray] = field(repr=False)
    categorical: dict[str, tuple[np.ndarray, tuple[str, ...]]] = field(repr=False)
    n_rows: int = 0
    dropped_rows: int = 0

    def __post_init__(self):
        names = [c for c, _ in self.columns]
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate column names in {names}")
        if self.n_rows < 2:
            raise DatasetError(f"dataset {self.name!r} needs at least 2 rows, has {self.n_rows}")
        for name, values in self.numeric.items():
            values.setflags(write=False)
            if values.shape != (self.n_rows,):
                raise DatasetError(f"column {name!r} has wrong length")
            if not np.all(np.isfinite(values)):
                raise DatasetError(f"column {name!r} contains non-finite values")
        for name, (codes, _) in self.categorical.items():
            codes.setflags(write=False)
            if codes.shape != (self.n_rows,):
                raise DatasetError(f"column {name!r} has wrong length")

    @property
    def column_names(self) -> list[str]:
        return [c for c, _ in self.columns]

    @property
    def numeric_columns(self) -> list[str]:
        return [c for c, kind in self.columns if kind == NUMERIC]

    @property
    def categorical_columns(self) -> list[str]:
        return [c for c, kind in self.columns if kind == CATEGORICAL]

    def kind(self, name: str) -> str:
        for c, kind in self.columns:
            if c == name:
                return kind
        raise DatasetError(f"unknown column {name!r}; available: {self.column_names}")

    def column_values(self, name: str) -> np.ndarray:
        """Raw values of a column: floats for numeric, level labels for categorical."""
        if self.kind(name) == NUMERIC:
            return self.numeric[name]
        codes, levels = self.categorical[name]
        return np.asarray(levels, dtype=object)[codes]

    def evaluate(self, expr: str) -> np.ndarray:
        """Evaluate a column expression (plain name, ``a:b``, ``a^k``) row-wise."""
        return evaluate_expression(self, expr)

    def with_derived(self, name: str, expr: str) -> "Dataset":
        """Return a copy with an extra numeric column computed from ``expr``."""
        if name in self.column_names:
            raise DatasetError(f"column {name!r} already exists")
        values = np.array(self.evaluate(expr), dtype=float)
        numeric = dict(self.numeric)
        numeric[name] = values
        return Dataset(
            name=self.name,
            columns=self.columns + ((name, NUMERIC),),
            numeric=numeric,
            categorical=dict(self.categorical),
            n_rows=self.n_rows,
            dropped_rows=self.dropped_rows,
        )


@dataclass(frozen=True)
class ColumnSelection:
    """Ordered numeric columns (or derived expressions) entering the metric."""

    selected: tuple[str, ...]

    def __post_init__(self):
        if not self.selected:
            raise DatasetError("column selection is empty")
        if len(set(self.selected)) != len(self.selected):
            raise DatasetError(f"duplicate entries in selection {self.selected}")

    @property
    def d(self) -> int:
        return len(self.selected)

    def __iter__(self):
        return iter(self.selected)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    fraction: float

    def __post_init__(self):
        for arr in (self.train, self.test):
            arr.setflags(write=False)

    @classmethod
    def from_mask(cls, train_mask: np.ndarray) -> "SplitIndices":
        train_mask = np.asarray(train_mask, dtype=bool)
        n = train_mask.size
        split = cls(
            train=np.flatnonzero(train_mask),
            test=np.flatnonzero(~train_mask),
            fraction=float(train_mask.sum()) / n if n else float("nan"),
        )
        split.validate(n)
        return split

    @classmethod
    def from_train(cls, train: Iterable[int], n: int) -> "SplitIndices":
        mask = np.zeros(n, dtype=bool)
        idx = np.asarray(list(train), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DatasetError(f"train index out of range for {n} rows")
        mask[idx] = True
        return cls.from_mask(mask)

    @property
    def n(self) -> int:
        return int(self.train.size + self.test.size)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.train] = True
        return m

    def validate(self, n: int) -> None:
        """Check that this is a partition of ``range(n)`` with both sides non-empty."""
        if self.train.size == 0 or self.test.size == 0:
            raise DatasetError(
                f"split has an empty partition (train={self.train.size}, test={self.test.size})"
            )
        both = np.concatenate([self.train, self.test])
        if both.size != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise DatasetError(f"split is not a partition of {n} rows")


def _parse_real(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def load_csv(path: str | Path, delimiter: str = ",", name: str | None = None) -> Dataset:
    """Load a delimited text file with a mandatory header row.

    A column is numeric iff every non-missing cell parses as a finite real.
    Rows holding a missing cell are dropped; the count is logged and stored
    in ``Dataset.dropped_rows``. Files ending in ``.gz`` are decompressed.
    """
    path = Path(path)
    try:
        with _open_text(path) as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DatasetError(f"duplicate header names in {path}: {dupes}")

    body = []
    dropped = 0
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        if any(c.lower() in MISSING_TOKENS for c in cells):
            dropped += 1
            continue
        body.append(cells)
    if not body:
        raise DatasetError(f"{path} has no usable rows")
    if dropped:
        logger.warning("%s: dropped %d row(s) with missing cells", path, dropped)

    columns = []
    numeric: dict[str, np.ndarray] = {}
    categorical: dict[str, tuple[np.ndarray, tuple[str, ...]]] = {}
    for j, col in enumerate(header):
        cells = [r[j] for r in body]
        parsed = [_parse_real(c) for c in cells]
        if all(v is not None for v in parsed):
            numeric[col] = np.array(parsed, dtype=float)
            columns.append((col, NUMERIC))
        else:
            levels = tuple(sorted(set(cells)))
            lookup = {lv: i for i, lv in enumerate(levels)}
            categorical[col] = (np.array([lookup[c] for c in cells], dtype=np.int64), levels)
            columns.append((col, CATEGORICAL))

    return Dataset(
        name=name or path.name.split(".")[0],
        columns=tuple(columns),
        numeric=numeric,
        categorical=categorical,
        n_rows=len(body),
        dropped_rows=dropped,
    )


def write_csv(ds: Dataset, path: str | Path, delimiter: str = ",") -> None:
    """Write a dataset so that :func:`load_csv` recovers it exactly."""
    names = ds.column_names
    cols = []
    for c in names:
        if ds.kind(c) == NUMERIC:
            cols.append([repr(float(v)) for v in ds.numeric[c]])
        else:
            cols.append(list(ds.column_values(c)))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(names)
        writer.writerows(zip(*cols))


def from_arrays(name: str, data: dict[str, Sequence]) -> Dataset:
    """Build a dataset from in-memory columns; non-numeric sequences become categorical."""
    columns = []
    numeric = {}
    categorical = {}
    n = None
    for col, values in data.items():
        arr = np.asarray(values)
        n = arr.shape[0] if n is None else n
        if arr.dtype.kind in "biuf":
            numeric[col] = arr.astype(float)
            columns.append((col, NUMERIC))
        else:
            cells = [str(v) for v in arr]
            levels = tuple(sorted(set(cells)))
            lookup = {lv: i for i, lv in enumerate(levels)}
            categorical[col] = (np.array([lookup[c] for c in cells], dtype=np.int64), levels)
            columns.append((col, CATEGORICAL))
    return Dataset(name=name, columns=tuple(columns), numeric=numeric,
                   categorical=categorical, n_rows=int(n or 0))


def parse_expression(expr: str) -> list[tuple[str, int]]:
    """Split ``a:b^2:c`` into ``[(a, 1), (b, 2), (c, 1)]``."""
    factors = []
    for part in expr.split(":"):
        part = part.strip()
        power = 1
        if "^" in part:
            base, _, exp = part.partition("^")
            part = base.strip()
            try:
                power = int(exp.strip())
            except ValueError:
                raise DatasetError(f"bad power in {expr!r}") from None
            if power < 1:
                raise DatasetError(f"power must be >= 1 in {expr!r}")
        if not _NAME_RE.match(part):
            raise DatasetError(f"bad column reference {part!r} in {expr!r}")
        factors.append((part, power))
    return factors


def evaluate_expression(ds: Dataset, expr: str) -> np.ndarray:
    factors = parse_expression(expr)
    for col, _ in factors:
        if ds.kind(col) != NUMERIC:
            raise DatasetError(f"column {col!r} is categorical and cannot enter the metric")
    if len(factors) == 1 and factors[0][1] == 1:
        return ds.numeric[factors[0][0]]
    out = np.ones(ds.n_rows)
    for col, power in factors:
        out = out * ds.numeric[col] ** power
    return out


def select_columns(ds: Dataset, names: Sequence[str] | None = None) -> ColumnSelection:
    """Choose the columns entering the distance metric.

    With ``names`` omitted every numeric column is used, in dataset order,
    and categorical columns are skipped with a warning.
    """
    if names is None:
        skipped = ds.categorical_columns
        if skipped:
            logger.warning("excluding categorical column(s) from the metric: %s", ", ".join(skipped))
        if not ds.numeric_columns:
            raise DatasetError(f"dataset {ds.name!r} has no numeric columns")
        return ColumnSelection(tuple(ds.numeric_columns))
    cleaned = tuple(n.strip() for n in names)
    for expr in cleaned:
        for col, _ in parse_expression(expr):
            if ds.kind(col) != NUMERIC:
                raise DatasetError(f"column {col!r} is categorical and cannot enter the metric")
    return ColumnSelection(cleaned)


def view(ds: Dataset, sel: ColumnSelection, rows: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
    """Return a fresh ``len(rows) x d`` float matrix in selection order."""
    block = np.column_stack([evaluate_expression(ds, e) for e in sel.selected])
    if rows is None:
        return block
    idx = np.asarray(rows, dtype=np.int64)
    if idx.size == 0:
        raise DatasetError("empty partition")
    if idx.min() < 0 or idx.max() >= ds.n_rows:
        raise DatasetError(f"row index out of range for {ds.n_rows} rows")
    return block[idx]
