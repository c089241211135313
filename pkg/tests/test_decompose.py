import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hcast import synthetic
from hcast.decompose import (CategoricalEncoding, build_embedding, decompose, encode_categoricals,
                             extract_seasonality, extract_temporal, extract_trend, fit_layout,
                             fit_vocabulary, format_channel_map, parse_channel_map)
from hcast.errors import ConfigError, DataError


def brute_trend(x, kernel):
    half = kernel // 2
    n = len(x)
    return np.array([np.mean([x[min(max(j, 0), n - 1)] for j in range(i - half, i + half + 1)])
                     for i in range(n)])


# --------------------------------------------------------------------- trend

def test_constant_series():
    assert list(extract_trend([5.0] * 5, 3)) == [5.0] * 5
    assert list(extract_seasonality([5.0] * 5, extract_trend([5.0] * 5, 3))) == [0.0] * 5


def test_ramp_example_and_seasonal():
    x = np.array([1.0, 2, 3, 4, 5])
    trend = extract_trend(x, 3)
    np.testing.assert_allclose(trend, [4 / 3, 2, 3, 4, 14 / 3], rtol=0, atol=1e-15)
    np.testing.assert_allclose(trend, brute_trend(x, 3), rtol=0, atol=1e-15)
    np.testing.assert_allclose(extract_seasonality(x, trend), [-1 / 3, 0, 0, 0, 1 / 3], atol=1e-15)


def test_linear_ramp_interior_exact():
    x = 0.25 * np.arange(100.0) - 3.0
    trend = extract_trend(x, 25)
    np.testing.assert_allclose(trend[12:100 - 12], x[12:100 - 12], rtol=0, atol=1e-12)


@pytest.mark.parametrize("kernel", [0, 2, -3])
def test_bad_kernel(kernel):
    with pytest.raises(ConfigError):
        extract_trend([1.0, 2.0], kernel)


def test_length_mismatch():
    with pytest.raises(DataError):
        extract_seasonality([1.0, 2.0], [1.0])


def test_kernel_one_is_identity():
    x = np.random.default_rng(0).normal(size=(20, 3))
    parts = decompose(x, 1)
    assert np.array_equal(parts.trend, x) and not parts.seasonal.any()


@given(arrays(np.float64, st.integers(30, 120), elements=st.floats(-100, 100)), st.integers(1, 5))
@settings(max_examples=100, deadline=None)
def test_trend_time_shift_equivariant(x, k):
    kernel, half = 7, 3
    a = extract_trend(x, kernel)
    b = extract_trend(x[k:], kernel)
    # interior of the shifted series, away from both padded edges
    idx = np.arange(half, len(x) - k - half)
    np.testing.assert_allclose(b[idx], a[idx + k], rtol=0, atol=1e-9)


@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(-100, 100)), st.floats(-50, 50))
@settings(max_examples=100, deadline=None)
def test_trend_level_shift(x, c):
    np.testing.assert_allclose(extract_trend(x + c, 5), extract_trend(x, 5) + c, rtol=0, atol=1e-9)


def test_decompose_batched_matches_rows():
    X = np.random.default_rng(3).normal(size=(4, 30, 2))
    batched = decompose(X, 5)
    for b in range(4):
        assert np.array_equal(decompose(X[b], 5).trend, batched.trend[b])


# -------------------------------------------------------------- categoricals

def test_one_hot_example():
    enc = encode_categoricals(["a", "b", "a"], ("a", "b"))
    assert enc.mode == "one_hot"
    assert enc.encoded.tolist() == [[1, 0], [0, 1], [1, 0]]


def test_ordinal_example_and_unseen():
    vocab = tuple(f"v{i}" for i in range(11))
    enc = CategoricalEncoding("c", vocab)
    assert enc.mode == "ordinal" and enc.width == 1
    assert enc.encode(["v5"])[0, 0] == 0.5
    assert enc.encode(["never"])[0, 0] == 1.0


def test_unseen_one_hot_is_zero_row():
    enc = CategoricalEncoding("c", ("a", "b"))
    assert enc.encode(["z"]).tolist() == [[0, 0]]


def test_vocabulary_first_appearance_and_empty():
    assert fit_vocabulary(["b", None, "a", "b"]) == ("b", "a")
    with pytest.raises(DataError):
        encode_categoricals([], ())


@given(st.lists(st.sampled_from("abcdefghijklmno"), min_size=1, max_size=60))
@settings(max_examples=100, deadline=None)
def test_encoding_ranges(values):
    enc = CategoricalEncoding("c", fit_vocabulary(values))
    out = enc.encode(values)
    if enc.mode == "one_hot":
        assert np.all(out.sum(axis=1) == 1)
    else:
        assert out.min() >= 0 and out.max() <= 1


# ------------------------------------------------------------------ calendar

def calendar_oracle(ts: dt.datetime):
    return [ts.weekday() / 6, ts.day / 31, ts.month / 12, ts.hour / 23, ts.minute / 59,
            ((ts.month - 1) // 3 + 1) / 4]


def test_temporal_examples():
    f = extract_temporal(np.array(["2020-01-01T00:00", "2020-12-31T23:59"], dtype="datetime64[s]"))
    assert f[0].tolist() == [2 / 6, 1 / 31, 1 / 12, 0, 0, 1 / 4]
    assert f[1].tolist()[2:] == [1.0, 1.0, 1.0, 1.0]


def test_date_only_has_zero_clock():
    f = extract_temporal(np.array(["2021-05-03", "2021-05-04"], dtype="datetime64[D]"))
    assert not f[:, 3:5].any()


@given(st.datetimes(min_value=dt.datetime(1900, 1, 1), max_value=dt.datetime(2200, 1, 1)))
@settings(max_examples=200, deadline=None)
def test_temporal_matches_calendar_oracle(ts):
    ts = ts.replace(microsecond=0)
    got = extract_temporal(np.array([np.datetime64(ts, "s")]))[0]
    np.testing.assert_allclose(got, calendar_oracle(ts), rtol=0, atol=1e-15)


# ----------------------------------------------------------------- embedding

def test_mixed_embedding_width(mixed):
    emb = build_embedding(mixed, kernel=5)
    assert emb.d == 13 == len(emb.channel_map)
    roles = [r for _, _, r in emb.channel_map]
    assert roles == ["trend"] * 2 + ["seasonal"] * 2 + ["cat"] * 3 + ["temporal"] * 6


def test_numeric_only_embedding():
    t = synthetic.trend_sinusoid(100)
    emb = build_embedding(t, kernel=5)
    assert [r for _, _, r in emb.channel_map] == ["trend", "seasonal"] + ["temporal"] * 6


def test_channel_map_roundtrip(mixed):
    cmap = fit_layout(mixed).channel_map()
    text = format_channel_map(cmap)
    assert parse_channel_map(text) == cmap
    assert "4:regime=low:cat" in text.splitlines()


def test_embedding_decomposes_each_window_alone(mixed_layout, mixed):
    frames = mixed_layout.frame(mixed)
    windows = np.stack([frames[i:i + 12] for i in (0, 50, 100)])
    emb = mixed_layout.embed(windows)
    for w, e in zip(windows, emb):
        np.testing.assert_allclose(e[:, :2], np.column_stack([brute_trend(w[:, j], 5) for j in range(2)]),
                                   atol=1e-14)
        np.testing.assert_allclose(e[:, :2] + e[:, 2:4], w[:, :2], atol=1e-12)
        assert np.array_equal(e[:, 4:], w[:, 2:])


@given(st.integers(1, 40), st.sampled_from([1, 3, 25]), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_embed_width_matches_channel_map(N, kernel, seed):
    t = synthetic.mixed_table(max(N, 1), seed=seed)
    lay = fit_layout(t, kernel=kernel)
    emb = lay.embed(lay.frame(t)[None])
    assert emb.shape[-1] == lay.embed_width == len(lay.channel_map())
