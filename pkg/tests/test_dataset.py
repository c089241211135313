import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hcast import synthetic
from hcast.dataset import (Column, NormalizationParams, SplitSpec, TimeTable, aggregate_table,
                           aggregate_window, denormalize, impute_missing, load_table, make_windows,
                           n_windows, normalize, temporal_split, window_arrays_checked, write_table)
from hcast.errors import ConfigError, DataError


def _table(values, cats=None):
    cols = {"load": np.asarray(values, dtype=float)}
    return synthetic.table_from_arrays(cols, categorical=cats)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ------------------------------------------------------------------- loading

def test_load_three_rows(tmp_path):
    path = _write(tmp_path, "date,load\n2020-01-01 00:00:00,1\n2020-01-01 01:00:00,2\n2020-01-01 02:00:00,3\n")
    t = load_table(path, {"date": "datetime"})
    assert t.N == 3 and t.numeric_names == ["load"]


def test_unparseable_cell_becomes_missing(tmp_path):
    path = _write(tmp_path, "date,load\n2020-01-01 00:00:00,abc\n2020-01-01 01:00:00,2\n")
    t = load_table(path, {"date": "datetime"})
    assert math.isnan(t.column("load").values[0])


def test_rows_sorted_by_timestamp(tmp_path):
    path = _write(tmp_path, "date,load\n2020-01-01 02:00:00,3\n2020-01-01 00:00:00,1\n2020-01-01 01:00:00,2\n")
    t = load_table(path, {"date": "datetime"})
    assert list(t.column("load").values) == [1, 2, 3]


def test_duplicate_timestamps_keep_file_order(tmp_path):
    path = _write(tmp_path, "date,load\n2020-01-01 01:00:00,9\n2020-01-01 00:00:00,1\n2020-01-01 01:00:00,5\n")
    assert list(load_table(path, {"date": "datetime"}).column("load").values) == [1, 9, 5]


@pytest.mark.parametrize("text,schema,needle", [
    ("date,load,load\n2020-01-01,1,2\n", {"date": "datetime"}, "duplicate"),
    ("date,load\n2020-01-01,1\n", {}, "no datetime"),
    ("date,load\n", {"date": "datetime"}, "zero data rows"),
    ("date,load\n2020-01-01,1,5\n", {"date": "datetime"}, "expected 2 fields"),
])
def test_load_errors(tmp_path, text, schema, needle):
    with pytest.raises(DataError, match=needle):
        load_table(_write(tmp_path, text), schema)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(DataError, match="nowhere.csv"):
        load_table(str(tmp_path / "nowhere.csv"))


def test_write_then_load_is_bit_exact(tmp_path, mixed):
    path = str(tmp_path / "m.csv")
    write_table(mixed, path)
    back = load_table(path, {"date": "datetime", "regime": "categorical"})
    for c in mixed.columns:
        assert np.array_equal(back.column(c.name).values, c.values)


def test_table_validation():
    ts = synthetic.hourly_index(3)
    with pytest.raises(DataError):
        TimeTable((Column("d", "datetime", ts), Column("x", "numeric", np.zeros(2))))
    with pytest.raises(DataError):
        TimeTable((Column("x", "numeric", np.zeros(3)),))


# ---------------------------------------------------------------- imputation

@pytest.mark.parametrize("raw,want", [
    ([np.nan, 2, np.nan, 4], [2, 2, 2, 4]),
    ([1, 2, 3], [1, 2, 3]),
    ([np.nan, np.nan, 7], [7, 7, 7]),
])
def test_impute_examples(raw, want):
    assert list(impute_missing(_table(raw)).column("load").values) == want


def test_impute_all_missing_names_column():
    with pytest.raises(DataError, match="load"):
        impute_missing(_table([np.nan, np.nan]))


@given(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_impute_idempotent_and_complete(vals):
    if all(v is None for v in vals):
        return
    t = _table([np.nan if v is None else v for v in vals])
    once = impute_missing(t)
    twice = impute_missing(once)
    v1 = once.column("load").values
    assert not np.isnan(v1).any()
    assert np.array_equal(v1, twice.column("load").values)


# ------------------------------------------------------------- normalization

def test_minmax_example():
    t, p = normalize(_table([0, 5, 10]))
    assert list(t.column("load").values) == [0, 0.5, 1]
    assert (p.lo[0], p.hi[0]) == (0, 10)


def test_constant_column_maps_to_zero_and_back():
    t, p = normalize(_table([4, 4, 4]))
    assert list(t.column("load").values) == [0, 0, 0]
    assert (p.lo[0], p.hi[0]) == (4, 4)
    assert list(denormalize(t, p).column("load").values) == [4, 4, 4]


def test_zscore_mode():
    t, p = normalize(_table([1.0, 2.0, 3.0]), mode="zscore")
    z = t.column("load").values
    assert abs(z.mean()) < 1e-15 and abs(z.std() - 1) < 1e-12


def test_unknown_mode():
    with pytest.raises(ConfigError):
        normalize(_table([1.0, 2.0]), mode="robust")


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50), st.sampled_from(["minmax", "zscore"]))
@settings(max_examples=100, deadline=None)
def test_normalize_roundtrip_and_train_range(vals, mode):
    t = _table(vals)
    z, p = normalize(t, mode=mode)
    back = denormalize(z, p).column("load").values
    scale = max(1.0, np.max(np.abs(vals)))
    assert np.max(np.abs(back - np.asarray(vals))) <= 1e-12 * scale
    if mode == "minmax":
        zv = z.column("load").values
        assert zv.min() >= 0 and zv.max() <= 1


def test_val_test_use_train_params():
    t = _table(np.arange(10.0))
    train, val, test = temporal_split(t)
    train_n, p = normalize(train)
    test_n, _ = normalize(test, p)
    assert test_n.column("load").values.max() > 1  # outside the train range is fine


# -------------------------------------------------------------------- splits

@pytest.mark.parametrize("n,sizes", [(10, (7, 1, 2)), (100, (70, 10, 20))])
def test_split_sizes(n, sizes):
    assert SplitSpec().sizes(n) == sizes
    parts = temporal_split(_table(np.arange(float(n))))
    assert tuple(p.N for p in parts) == sizes


def test_test_split_holds_latest_timestamps():
    t = _table(np.arange(50.0))
    _, _, test = temporal_split(t)
    assert np.array_equal(test.timestamps, t.timestamps[-test.N:])


def test_split_too_small_and_bad_fractions():
    with pytest.raises(DataError):
        temporal_split(_table([1.0, 2.0, 3.0]))
    with pytest.raises(ConfigError):
        SplitSpec(0.5, 0.1, 0.1)


@given(st.integers(10, 5000))
@settings(max_examples=100, deadline=None)
def test_split_partitions_rows(n):
    a, b, c = SplitSpec().sizes(n)
    assert a + b + c == n and min(a, b, c) >= 1


# --------------------------------------------------------------- aggregation

def test_aggregate_window_examples():
    t = _table([1.0, 2.0, 3.0], {"c": ["a", "a", "b"]})
    row = aggregate_window(t)
    assert row["load"] == 2 and row["c"] == "a" and row["date"] == t.timestamps[-1]
    tie = _table([1.0, 2.0], {"c": ["a", "b"]})
    assert aggregate_window(tie)["c"] == "a"


def test_aggregate_table_blocks():
    t = aggregate_table(_table(np.arange(7.0)), 3)
    assert list(t.column("load").values) == [1.0, 4.0, 6.0]


# ----------------------------------------------------------------- windowing

def test_window_count_examples():
    assert len(make_windows(np.arange(5.0), 2, 1)) == 3
    with pytest.raises(DataError, match="at least 4"):
        make_windows(np.arange(3.0), 2, 2)


def test_window_example_by_enumeration():
    series = np.arange(100.0)
    w = make_windows(series, 12, 24)
    brute = [(s, list(range(s + 12, s + 36))) for s in range(100) if s + 36 <= 100]
    assert len(w) == len(brute) == 65
    assert list(w[0].target[:, 0]) == list(range(12, 36))
    for sample, (start, rows) in zip(w, brute):
        assert sample.start == start and list(sample.target[:, 0]) == rows


@given(st.integers(2, 200), st.integers(1, 24), st.integers(1, 24))
@settings(max_examples=150, deadline=None)
def test_window_count_and_causality(N, S, T):
    ts = np.arange(N, dtype=float)
    if N < S + T:
        with pytest.raises(DataError):
            window_arrays_checked(ts, S, T)
        return
    inputs, targets = window_arrays_checked(ts, S, T)
    brute = sum(1 for s in range(N) if s + S + T <= N)
    assert inputs.shape[0] == n_windows(N, S, T) == N - S - T + 1 == brute
    assert np.all(inputs.max(axis=(1, 2)) < targets.min(axis=(1, 2)))


def test_bad_geometry():
    with pytest.raises(ConfigError):
        window_arrays_checked(np.arange(10.0), 0, 1)


def test_normalization_params_inverse_subset():
    p = NormalizationParams("minmax", ("a", "b"), np.array([0.0, 10.0]), np.array([2.0, 20.0]))
    np.testing.assert_allclose(p.inverse(np.array([[0.5]]), ["b"]), [[15.0]])
    np.testing.assert_allclose(p.range(["a", "b"]), [2.0, 10.0])
