"""Trend/seasonal decomposition, categorical encoding, calendar features and
the per-timestep embedding that concatenates them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TimeTable
from .errors import ConfigError, DataError
from .kernels import moving_average

ONE_HOT_MAX = 10
TEMPORAL_NAMES = ("day_of_week", "day_of_month", "month", "hour", "minute", "quarter")
TEMPORAL_DIVISORS = np.array([6.0, 31.0, 12.0, 23.0, 59.0, 4.0])
ROLES = ("trend", "seasonal", "cat", "temporal")


def _check_kernel(kernel):
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"kernel must be a positive odd integer, got {kernel}")


def extract_trend(x, kernel: int = 25) -> np.ndarray:
    """Centered moving average with edge-replication padding; same length as ``x``."""
    _check_kernel(kernel)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DataError("extract_trend expects a non-empty 1-d series")
    return moving_average(x[None, :, None], kernel)[0, :, 0]


def extract_seasonality(x, trend) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    trend = np.asarray(trend, dtype=np.float64)
    if x.shape != trend.shape:
        raise DataError(f"length mismatch: series {x.shape} vs trend {trend.shape}")
    return x - trend


@dataclass(frozen=True)
class DecomposedSeries:
    trend: np.ndarray
    seasonal: np.ndarray
    kernel: int


def decompose(X, kernel: int = 25) -> DecomposedSeries:
    """Decompose along the time axis of an (N, f) or (B, N, f) array."""
    _check_kernel(kernel)
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 2
    X3 = X[None] if squeeze else X
    if X3.ndim != 3:
        raise DataError(f"decompose expects 2-d or 3-d input, got shape {X.shape}")
    if X3.shape[2] == 0 or X3.shape[1] == 0:
        trend = np.zeros_like(X3)
    else:
        trend = moving_average(X3, kernel)
    seasonal = X3 - trend
    if squeeze:
        trend, seasonal = trend[0], seasonal[0]
    return DecomposedSeries(trend, seasonal, kernel)


# -------------------------------------------------------------------- categoricals

@dataclass(frozen=True)
class CategoricalEncoding:
    name: str
    vocabulary: tuple
    encoded: np.ndarray | None = None

    @property
    def mode(self) -> str:
        return "one_hot" if len(self.vocabulary) <= ONE_HOT_MAX else "ordinal"

    @property
    def width(self) -> int:
        return len(self.vocabulary) if self.mode == "one_hot" else 1

    def encode(self, values) -> np.ndarray:
        lookup = {v: i for i, v in enumerate(self.vocabulary)}
        idx = np.array([lookup.get(v, -1) for v in values], dtype=np.int64)
        n = len(idx)
        if self.mode == "one_hot":
            out = np.zeros((n, self.width))
            seen = idx >= 0
            out[np.flatnonzero(seen), idx[seen]] = 1.0
            return out
        denom = len(self.vocabulary) - 1
        # unseen values land one step past the last index, clipped into range
        pos = np.where(idx >= 0, idx, len(self.vocabulary)).astype(np.float64) / denom
        return np.minimum(pos, 1.0)[:, None]

    def labels(self) -> list:
        if self.mode == "one_hot":
            return [f"{self.name}={v}" for v in self.vocabulary]
        return [self.name]


def fit_vocabulary(values) -> tuple:
    """Distinct non-missing values in order of first appearance."""
    return tuple(dict.fromkeys(v for v in values if v is not None))


def encode_categoricals(col, vocabulary, name: str = "") -> CategoricalEncoding:
    vocabulary = tuple(vocabulary)
    if not vocabulary:
        raise DataError(f"categorical column {name!r} has an empty vocabulary")
    enc = CategoricalEncoding(name, vocabulary)
    return CategoricalEncoding(name, vocabulary, enc.encode(col))


# ------------------------------------------------------------------------ calendar

def calendar_fields(datetimes) -> np.ndarray:
    """Raw (unscaled) day_of_week, day_of_month, month, hour, minute, quarter."""
    ts = np.asarray(datetimes).astype("datetime64[s]")
    days = ts.astype("datetime64[D]")
    months = ts.astype("datetime64[M]")
    years = ts.astype("datetime64[Y]")
    # 1970-01-01 was a Thursday (Monday = 0)
    dow = (days.astype(np.int64) + 3) % 7
    dom = (days - months.astype("datetime64[D]")).astype(np.int64) + 1
    month = (months - years.astype("datetime64[M]")).astype(np.int64) + 1
    secs = (ts - days.astype("datetime64[s]")).astype(np.int64)
    hour = secs // 3600
    minute = (secs % 3600) // 60
    quarter = (month - 1) // 3 + 1
    return np.column_stack([dow, dom, month, hour, minute, quarter]).astype(np.float64)


def extract_temporal(datetimes) -> np.ndarray:
    """Six calendar features per timestep, each divided by its range maximum."""
    return calendar_fields(datetimes) / TEMPORAL_DIVISORS


# ----------------------------------------------------------------------- layout

@dataclass(frozen=True)
class FeatureLayout:
    """How a table becomes a per-timestep frame and how frames are embedded.

    A frame row is ``[numeric (f), categorical encodings, temporal (6)]``.
    Embedding a window of frame rows decomposes the numeric block into
    trend and seasonal parts: ``[trend (f), seasonal (f), cat, temporal]``.
    """
    datetime_name: str
    numeric: tuple
    targets: tuple
    encodings: tuple = ()
    temporal: bool = True
    kernel: int = 25

    def __post_init__(self):
        _check_kernel(self.kernel)
        missing = [t for t in self.targets if t not in self.numeric]
        if missing:
            raise ConfigError(f"target columns are not numeric columns: {missing}")
        if not self.targets:
            raise ConfigError("at least one numeric target column is required")

    @property
    def n_numeric(self) -> int:
        return len(self.numeric)

    @property
    def target_index(self) -> np.ndarray:
        return np.array([self.numeric.index(t) for t in self.targets], dtype=np.int64)

    @property
    def cat_width(self) -> int:
        return sum(e.width for e in self.encodings)

    @property
    def n_temporal(self) -> int:
        return len(TEMPORAL_NAMES) if self.temporal else 0

    @property
    def frame_width(self) -> int:
        return self.n_numeric + self.cat_width + self.n_temporal

    @property
    def embed_width(self) -> int:
        return 2 * self.n_numeric + self.cat_width + self.n_temporal

    @property
    def has_context_channels(self) -> bool:
        return self.cat_width + self.n_temporal > 0

    @property
    def has_categoricals(self) -> bool:
        return len(self.encodings) > 0

    def frame(self, table: TimeTable) -> np.ndarray:
        parts = [table.numeric_matrix(list(self.numeric))]
        for enc in self.encodings:
            parts.append(enc.encode(table.column(enc.name).values))
        if self.temporal:
            parts.append(extract_temporal(table.timestamps))
        return np.concatenate(parts, axis=1)

    def future_rows(self, last_row: np.ndarray, predicted: np.ndarray, timestamps=None) -> np.ndarray:
        """Frame rows for forecast steps.

        Target numerics come from ``predicted`` (T, n_targets); other numerics
        and categorical encodings hold their last observed value; temporal
        features come from ``timestamps`` when given, else hold last.
        """
        T = predicted.shape[0]
        rows = np.repeat(last_row[None, :], T, axis=0)
        rows[:, self.target_index] = predicted
        if self.temporal and timestamps is not None:
            rows[:, self.frame_width - self.n_temporal:] = extract_temporal(timestamps)
        return rows

    def embed(self, frames: np.ndarray) -> np.ndarray:
        """Embed frame windows (B, S, c) -> (B, S, d), decomposing each window alone."""
        frames = np.asarray(frames, dtype=np.float64)
        f = self.n_numeric
        parts = decompose(frames[..., :f], self.kernel)
        return np.concatenate([parts.trend, parts.seasonal, frames[..., f:]], axis=-1)

    def channel_map(self) -> list:
        chans = [(n, "trend") for n in self.numeric]
        chans += [(n, "seasonal") for n in self.numeric]
        for enc in self.encodings:
            chans += [(label, "cat") for label in enc.labels()]
        if self.temporal:
            chans += [(f"{self.datetime_name}.{t}", "temporal") for t in TEMPORAL_NAMES]
        return [(i, src, role) for i, (src, role) in enumerate(chans)]


def fit_layout(train: TimeTable, targets=None, kernel: int = 25, temporal: bool = True) -> FeatureLayout:
    """Derive a layout, taking categorical vocabularies from the training split."""
    encodings = []
    for name in train.categorical_names:
        vocab = fit_vocabulary(train.column(name).values)
        if not vocab:
            raise DataError(f"categorical column {name!r} has no values in the training split")
        encodings.append(CategoricalEncoding(name, vocab))
    numeric = tuple(train.numeric_names)
    targets = tuple(numeric if targets is None else targets)
    return FeatureLayout(train.datetime_column.name, numeric, targets, tuple(encodings), temporal, kernel)


@dataclass(frozen=True)
class DecomposedEmbedding:
    matrix: np.ndarray
    channel_map: list

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def build_embedding(table: TimeTable, kernel: int = 25, layout: FeatureLayout | None = None) -> DecomposedEmbedding:
    """Embed a whole (imputed, normalized) table, decomposing over its full length."""
    if layout is None:
        layout = fit_layout(table, kernel=kernel)
    elif layout.kernel != kernel:
        layout = FeatureLayout(layout.datetime_name, layout.numeric, layout.targets,
                               layout.encodings, layout.temporal, kernel)
    matrix = layout.embed(layout.frame(table)[None])[0]
    return DecomposedEmbedding(matrix, layout.channel_map())


def format_channel_map(channel_map) -> str:
    return "".join(f"{i}:{src}:{role}\n" for i, src, role in channel_map)


def parse_channel_map(text: str) -> list:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        idx, rest = line.split(":", 1)
        src, role = rest.rsplit(":", 1)
        if role not in ROLES:
            raise DataError(f"bad channel role {role!r} in line {line!r}")
        out.append((int(idx), src, role))
    return out
