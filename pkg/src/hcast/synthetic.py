"""Seeded synthetic series used by tests, benchmarks and demos."""
from __future__ import annotations

import numpy as np

from .dataset import Column, TimeTable, write_table


def hourly_index(n, start="2020-01-01T00:00:00"):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(3600, "s")


def table_from_arrays(values: dict, timestamps=None, categorical: dict | None = None) -> TimeTable:
    n = len(next(iter(values.values())))
    ts = hourly_index(n) if timestamps is None else np.asarray(timestamps, dtype="datetime64[s]")
    cols = [Column("date", "datetime", ts)]
    cols += [Column(k, "numeric", np.asarray(v, dtype=np.float64)) for k, v in values.items()]
    for k, v in (categorical or {}).items():
        cols.append(Column(k, "categorical", np.asarray(v, dtype=object)))
    return TimeTable(tuple(cols))


def trend_sinusoid(n=2000, period=24, slope=0.002, amplitude=1.0, noise=0.1, seed=0) -> TimeTable:
    """Linear trend plus a sinusoid plus white noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    y = slope * t + amplitude * np.sin(2 * np.pi * t / period) + noise * rng.standard_normal(n)
    return table_from_arrays({"value": y})


def sinusoid(n=4000, period=24, amplitude=1.0, noise=0.1, seed=0) -> TimeTable:
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    y = amplitude * np.sin(2 * np.pi * t / period) + noise * rng.standard_normal(n)
    return table_from_arrays({"value": y})


def random_walk(n=2000, seed=0) -> TimeTable:
    """Cumulative sum of unit-variance Gaussian steps."""
    rng = np.random.default_rng(seed)
    return table_from_arrays({"value": np.cumsum(rng.standard_normal(n))})


def mixed_table(n=600, seed=0) -> TimeTable:
    """Two numerics plus a 3-level categorical that shifts the level."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    shift = np.array(["low", "mid", "high"], dtype=object)
    cat = shift[(t // 48).astype(int) % 3]
    level = np.select([cat == "low", cat == "mid"], [0.0, 0.5], 1.0)
    a = np.sin(2 * np.pi * t / 24) + level + 0.05 * rng.standard_normal(n)
    b = 0.5 * np.cos(2 * np.pi * t / 12) + 0.05 * rng.standard_normal(n)
    return table_from_arrays({"a": a, "b": b}, categorical={"regime": cat})


def write_fixture(table: TimeTable, path) -> None:
    write_table(table, path)
