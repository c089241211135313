"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``HCAST_DISABLE_NUMBA=1`` before import to force the numpy path. Both
paths return identical shapes and agree to floating-point rounding.
"""
import os

import numpy as np

_DISABLED = os.environ.get("HCAST_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by HCAST_DISABLE_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def _moving_average_numpy(x, kernel):
    half = (kernel - 1) // 2
    padded = np.pad(x, ((0, 0), (half, half), (0, 0)), mode="edge")
    view = np.lib.stride_tricks.sliding_window_view(padded, kernel, axis=1)
    return view.mean(axis=-1)


def _windows_numpy(series, S, T, stride, offset):
    n_samples = (series.shape[0] - S - T - offset) // stride + 1
    starts = np.arange(n_samples) * stride
    rows_in = starts[:, None] + np.arange(S)[None, :]
    rows_out = starts[:, None] + S + offset + np.arange(T)[None, :]
    return series[rows_in], series[rows_out]


if HAS_NUMBA:

    @njit(cache=True)
    def _moving_average_numba(x, kernel):
        B, N, F = x.shape
        half = (kernel - 1) // 2
        out = np.empty_like(x)
        for b in range(B):
            for i in range(N):
                for f in range(F):
                    acc = 0.0
                    for j in range(kernel):
                        k = i - half + j
                        if k < 0:
                            k = 0
                        elif k > N - 1:
                            k = N - 1
                        acc += x[b, k, f]
                    out[b, i, f] = acc / kernel
        return out

    @njit(cache=True)
    def _windows_numba(series, S, T, stride, offset):
        N, D = series.shape
        n_samples = (N - S - T - offset) // stride + 1
        inputs = np.empty((n_samples, S, D))
        targets = np.empty((n_samples, T, D))
        for s in range(n_samples):
            start = s * stride
            for i in range(S):
                for d in range(D):
                    inputs[s, i, d] = series[start + i, d]
            for i in range(T):
                for d in range(D):
                    targets[s, i, d] = series[start + S + offset + i, d]
        return inputs, targets


def moving_average(x, kernel):
    """Centered moving average along axis 1 of a (batch, time, channel) array.

    Edges are padded by replicating the first and last value, so the output
    keeps the input length.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if HAS_NUMBA:
        return _moving_average_numba(x, int(kernel))
    return _moving_average_numpy(x, int(kernel))


def window_arrays(series, S, T, stride=1, offset=0):
    """Gather (inputs, targets) of shapes (n, S, d) and (n, T, d)."""
    series = np.ascontiguousarray(series, dtype=np.float64)
    if HAS_NUMBA:
        return _windows_numba(series, int(S), int(T), int(stride), int(offset))
    return _windows_numpy(series, int(S), int(T), int(stride), int(offset))


def backend():
    return "numba" if HAS_NUMBA else "numpy"
