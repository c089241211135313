"""Tabular ingestion, imputation, scaling, temporal splits and windowing."""
from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .kernels import window_arrays

KINDS = ("datetime", "numeric", "categorical")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    values: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        """True where the cell is missing."""
        if self.kind == "numeric":
            return np.isnan(self.values)
        if self.kind == "categorical":
            return np.array([v is None for v in self.values], dtype=bool)
        return np.isnat(self.values)


@dataclass(frozen=True)
class TimeTable:
    columns: tuple

    def __post_init__(self):
        if not self.columns:
            raise DataError("table has no columns")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate column names: {dup}")
        kinds = [c.kind for c in self.columns]
        bad = [k for k in kinds if k not in KINDS]
        if bad:
            raise DataError(f"unknown column kind(s): {bad}")
        if kinds.count("datetime") != 1:
            raise DataError(f"expected exactly one datetime column, found {kinds.count('datetime')}")
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) != 1:
            raise DataError(f"columns have differing lengths: {sorted(lengths)}")
        if lengths.pop() < 1:
            raise DataError("table has zero rows")
        ts = self.timestamps
        if len(ts) > 1 and np.any(ts[1:] < ts[:-1]):
            raise DataError("timestamps are not in nondecreasing order")

    @property
    def N(self) -> int:
        return len(self.columns[0].values)

    @property
    def datetime_column(self) -> Column:
        return next(c for c in self.columns if c.kind == "datetime")

    @property
    def timestamps(self) -> np.ndarray:
        return self.datetime_column.values

    @property
    def numeric_names(self) -> list:
        return [c.name for c in self.columns if c.kind == "numeric"]

    @property
    def categorical_names(self) -> list:
        return [c.name for c in self.columns if c.kind == "categorical"]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def numeric_matrix(self, names=None) -> np.ndarray:
        names = self.numeric_names if names is None else names
        if not names:
            return np.zeros((self.N, 0))
        return np.column_stack([self.column(n).values for n in names]).astype(np.float64)

    def slice(self, start, stop) -> "TimeTable":
        return TimeTable(tuple(replace(c, values=c.values[start:stop]) for c in self.columns))

    def with_values(self, updates: dict) -> "TimeTable":
        return TimeTable(tuple(
            replace(c, values=updates[c.name]) if c.name in updates else c for c in self.columns
        ))


def concat_tables(*tables: TimeTable) -> TimeTable:
    first = tables[0]
    cols = []
    for c in first.columns:
        cols.append(replace(c, values=np.concatenate([t.column(c.name).values for t in tables])))
    return TimeTable(tuple(cols))


# --------------------------------------------------------------------- loading

def parse_timestamp(text: str) -> np.datetime64:
    text = text.strip()
    try:
        return np.datetime64(text.replace(" ", "T", 1), "s")
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {text!r}") from exc


def _parse_number(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value


def load_table(path, schema: dict | None = None) -> TimeTable:
    """Read a comma-separated file with a header row into a TimeTable.

    ``schema`` maps column name to kind; undeclared columns are numeric.
    Unparseable numeric cells become missing. Rows are stably sorted by
    timestamp.
    """
    schema = dict(schema or {})
    if not os.path.isfile(path):
        raise DataError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]

    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate column names {dup}")
    unknown = [n for n in schema if n not in header]
    if unknown:
        raise DataError(f"{path}: declared columns not in header: {unknown}")
    for name, kind in schema.items():
        if kind not in KINDS:
            raise ConfigError(f"column {name!r}: unknown kind {kind!r}")
    kinds = [schema.get(h, "numeric") for h in header]
    if "datetime" not in kinds:
        raise DataError(f"{path}: no datetime column declared")
    if not rows:
        raise DataError(f"{path}: zero data rows")

    width = len(header)
    for lineno, r in enumerate(rows, start=2):
        if len(r) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(r)}")

    columns = []
    for j, (name, kind) in enumerate(zip(header, kinds)):
        cells = [r[j].strip() for r in rows]
        if kind == "datetime":
            values = np.array([parse_timestamp(c) for c in cells], dtype="datetime64[s]")
        elif kind == "numeric":
            values = np.array([_parse_number(c) for c in cells], dtype=np.float64)
        else:
            values = np.array([c if c else None for c in cells], dtype=object)
        columns.append(Column(name, kind, values))

    ts = next(c for c in columns if c.kind == "datetime").values
    if np.isnat(ts).any():
        raise DataError(f"{path}: missing timestamps")
    order = np.argsort(ts, kind="stable")
    columns = [replace(c, values=c.values[order]) for c in columns]
    return TimeTable(tuple(columns))


def write_table(table: TimeTable, path) -> None:
    """Write a table as CSV; floats use repr so a reload is bit-exact."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in table.columns])
        cols = []
        for c in table.columns:
            if c.kind == "datetime":
                cols.append([str(v).replace("T", " ") for v in c.values])
            elif c.kind == "numeric":
                cols.append(["" if math.isnan(v) else repr(float(v)) for v in c.values])
            else:
                cols.append(["" if v is None else str(v) for v in c.values])
        w.writerows(zip(*cols))


# ------------------------------------------------------------------ imputation

def _ffill_bfill(values: np.ndarray) -> np.ndarray:
    missing = np.isnan(values)
    if not missing.any():
        return values.copy()
    n = len(values)
    idx = np.where(missing, 0, np.arange(n))
    np.maximum.accumulate(idx, out=idx)
    out = values[idx]
    # leading gap: idx points at 0 which may itself be missing
    still = np.isnan(out)
    if still.any():
        first = np.flatnonzero(~missing)[0]
        out[still] = values[first]
    return out


def impute_missing(table: TimeTable) -> TimeTable:
    """Forward fill then backward fill every numeric column."""
    updates = {}
    for c in table.columns:
        if c.kind != "numeric":
            continue
        if np.isnan(c.values).all():
            raise DataError(f"numeric column {c.name!r} is entirely missing")
        updates[c.name] = _ffill_bfill(c.values)
    return table.with_values(updates)


# --------------------------------------------------------------- normalization

@dataclass(frozen=True)
class NormalizationParams:
    """Per-column scaling parameters.

    For ``minmax`` the pair is (min, max); for ``zscore`` it is (mean, std).
    """
    mode: str
    names: tuple
    lo: np.ndarray
    hi: np.ndarray

    def _index(self, names):
        return [self.names.index(n) for n in names]

    def _scale(self, idx):
        if self.mode == "minmax":
            offset, scale = self.lo[idx], self.hi[idx] - self.lo[idx]
        else:
            offset, scale = self.lo[idx], self.hi[idx]
        return offset, scale

    def transform(self, values: np.ndarray, names=None) -> np.ndarray:
        idx = self._index(self.names if names is None else names)
        offset, scale = self._scale(idx)
        safe = np.where(scale > 0, scale, 1.0)
        out = (values - offset) / safe
        return np.where(scale > 0, out, 0.0)

    def inverse(self, values: np.ndarray, names=None) -> np.ndarray:
        idx = self._index(self.names if names is None else names)
        offset, scale = self._scale(idx)
        return values * scale + offset

    def range(self, names=None) -> np.ndarray:
        """Width of each column's scale (max - min, or std)."""
        return self._scale(self._index(self.names if names is None else names))[1]


def fit_normalization(table: TimeTable, mode: str = "minmax") -> NormalizationParams:
    if mode not in ("minmax", "zscore"):
        raise ConfigError(f"unknown normalization mode {mode!r}")
    names = tuple(table.numeric_names)
    X = table.numeric_matrix(list(names))
    if np.isnan(X).any():
        raise DataError("normalization requires complete numeric columns; impute first")
    if mode == "minmax":
        lo, hi = X.min(axis=0), X.max(axis=0)
    else:
        lo, hi = X.mean(axis=0), X.std(axis=0)
    return NormalizationParams(mode, names, lo.astype(np.float64), hi.astype(np.float64))


def normalize(table: TimeTable, params: NormalizationParams | None = None, mode: str = "minmax"):
    """Scale numeric columns; fits ``params`` on ``table`` when not given.

    Constant columns map to zero and invert back to their constant.
    """
    if params is None:
        params = fit_normalization(table, mode)
    names = list(params.names)
    Z = params.transform(table.numeric_matrix(names), names)
    return table.with_values({n: Z[:, j] for j, n in enumerate(names)}), params


def denormalize(table: TimeTable, params: NormalizationParams) -> TimeTable:
    names = list(params.names)
    X = params.inverse(table.numeric_matrix(names), names)
    return table.with_values({n: X[:, j] for j, n in enumerate(names)})


# ---------------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fr):
            raise ConfigError(f"split fractions must be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)}")

    def sizes(self, n: int) -> tuple:
        n_train = int(math.floor(self.train_frac * n + 1e-9))
        n_val = int(math.floor(self.val_frac * n + 1e-9))
        return n_train, n_val, n - n_train - n_val


def temporal_split(table: TimeTable, spec: SplitSpec = SplitSpec()):
    """Contiguous chronological train/val/test slices."""
    n_train, n_val, n_test = spec.sizes(table.N)
    if min(n_train, n_val, n_test) < 1:
        raise DataError(
            f"{table.N} rows is too few for a {spec.train_frac}/{spec.val_frac}/{spec.test_frac} split"
        )
    return (
        table.slice(0, n_train),
        table.slice(n_train, n_train + n_val),
        table.slice(n_train + n_val, table.N),
    )


# ------------------------------------------------------------------ aggregation

def aggregate_window(window: TimeTable) -> dict:
    """Collapse rows into one: mean for numerics, mode for categoricals.

    Mode ties go to the value seen first. The datetime of the result is the
    window's last timestamp.
    """
    if window.N < 1:
        raise DataError("cannot aggregate an empty window")
    row = {}
    for c in window.columns:
        if c.kind == "numeric":
            row[c.name] = float(np.mean(c.values))
        elif c.kind == "categorical":
            counts = Counter(c.values)  # insertion order = first-seen order
            row[c.name] = max(counts, key=counts.__getitem__)
        else:
            row[c.name] = c.values[-1]
    return row


def aggregate_table(table: TimeTable, width: int) -> TimeTable:
    """Aggregate consecutive non-overlapping blocks of ``width`` rows."""
    if width < 1:
        raise ConfigError("aggregation width must be >= 1")
    if width == 1:
        return table
    rows = [aggregate_window(table.slice(s, min(s + width, table.N))) for s in range(0, table.N, width)]
    cols = []
    for c in table.columns:
        vals = [r[c.name] for r in rows]
        if c.kind == "numeric":
            arr = np.array(vals, dtype=np.float64)
        elif c.kind == "datetime":
            arr = np.array(vals, dtype="datetime64[s]")
        else:
            arr = np.array(vals, dtype=object)
        cols.append(Column(c.name, c.kind, arr))
    return TimeTable(tuple(cols))


# -------------------------------------------------------------------- windowing

@dataclass(frozen=True)
class WindowedSample:
    input: np.ndarray
    target: np.ndarray
    start: int
    S: int = field(default=0)
    T: int = field(default=0)


def n_windows(N: int, S: int, T: int, stride: int = 1, offset: int = 0) -> int:
    return max(0, (N - S - T - offset) // stride + 1)


def window_arrays_checked(series, S, T, stride=1, offset=0):
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if S < 1 or T < 1 or stride < 1 or offset < 0:
        raise ConfigError(f"invalid window geometry S={S} T={T} stride={stride} offset={offset}")
    need = S + T + offset
    if series.shape[0] < need:
        raise DataError(f"series of length {series.shape[0]} is too short: need at least {need} rows")
    return window_arrays(series, S, T, stride, offset)


def make_windows(series, S: int, T: int, stride: int = 1) -> list:
    """Sliding (look-back, horizon) samples; sample k starts at row k*stride."""
    inputs, targets = window_arrays_checked(series, S, T, stride)
    return [
        WindowedSample(inputs[k], targets[k], k * stride, S, T) for k in range(inputs.shape[0])
    ]
