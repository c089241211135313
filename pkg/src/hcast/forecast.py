"""Single-step, iterative and direct multi-step forecasting plus metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import NormalizationParams
from .decompose import extract_temporal
from .errors import ConfigError, DataError
from .kernels import window_arrays


def _layout(model):
    inner = getattr(model, "model", model)
    return inner.layout


def _dims(model):
    inner = getattr(model, "model", model)
    return inner.S, inner.T


# ----------------------------------------------------------------- prediction

def predict_single(model, window) -> np.ndarray:
    """One forward pass of a T=1 model on one window; returns (1, n_targets)."""
    _, T = _dims(model)
    if T != 1:
        raise ConfigError(f"predict_single needs a horizon-1 model, got T={T}")
    return model.predict(np.asarray(window, dtype=np.float64)[None])[0]


def _future_times(last_ts, step, T):
    if last_ts is None or step is None:
        return None
    return np.asarray(last_ts, dtype="datetime64[s]")[..., None] + step * np.arange(1, T + 1)


def predict_iterative_batch(model, windows, H, last_ts=None, step=None) -> np.ndarray:
    """Iterate a T-step model H times over a batch of windows (B, S, c).

    Each round's predictions become new frame rows: target channels take the
    forecast, other numerics and categorical encodings hold their last value,
    calendar features come from timestamps extrapolated by ``step`` (held
    otherwise). Returns (B, H*T, n_targets).
    """
    if H < 1:
        raise ConfigError(f"H must be >= 1, got {H}")
    layout = _layout(model)
    S, T = _dims(model)
    ctx = np.array(windows, dtype=np.float64)
    B = ctx.shape[0]
    tidx = layout.target_index
    tcols = layout.frame_width - layout.n_temporal
    ts = None if last_ts is None else np.broadcast_to(np.asarray(last_ts, dtype="datetime64[s]"), (B,))
    outputs = []
    for _ in range(H):
        pred = model.predict(ctx[:, -S:, :])
        outputs.append(pred)
        rows = np.repeat(ctx[:, -1:, :], T, axis=1)
        rows[:, :, tidx] = pred
        future = _future_times(ts, step, T)
        if layout.temporal and future is not None:
            rows[:, :, tcols:] = extract_temporal(future.reshape(-1)).reshape(B, T, -1)
            ts = future[:, -1]
        ctx = np.concatenate([ctx[:, -S:, :], rows], axis=1)
    return np.concatenate(outputs, axis=1)


def predict_iterative(model, window, H, last_ts=None, step=None) -> np.ndarray:
    """Iterative multi-step forecast from one window (S, c); returns (H*T, n_targets)."""
    return predict_iterative_batch(model, np.asarray(window)[None], H, last_ts, step)[0]


def predict_direct(models, window, H) -> np.ndarray:
    """Block k of the output is ``models[k]`` applied to the same window."""
    if len(models) != H:
        raise ConfigError(f"direct forecasting needs {H} models, got {len(models)}")
    window = np.asarray(window, dtype=np.float64)
    return np.concatenate([m.predict(window[None])[0] for m in models], axis=0)


def predict_direct_batch(models, windows) -> np.ndarray:
    return np.concatenate([m.predict(windows) for m in models], axis=1)


def persistence_forecast(windows, horizon, target_index) -> np.ndarray:
    """Repeat each window's last observed target values ``horizon`` times."""
    last = np.asarray(windows)[:, -1:, target_index]
    return np.repeat(last, horizon, axis=1)


# -------------------------------------------------------------------- metrics

def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DataError(f"shape mismatch: y {y.shape} vs prediction {yhat.shape}")
    if y.size == 0:
        raise DataError("metrics need at least one value")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    d = y - yhat
    return float(np.mean(d * d))


def improvement_pct(ours: float, best_other: float) -> float:
    """Relative reduction of ``ours`` versus a baseline, in percent."""
    if not best_other > 0:
        raise DataError(f"baseline error must be positive, got {best_other}")
    return 100.0 * (best_other - ours) / best_other


# ----------------------------------------------------------------- evaluation

@dataclass
class ForecastRun:
    generator: object
    params: NormalizationParams | None
    S: int
    T: int
    H: int
    mode: str
    predictions: np.ndarray
    truth: np.ndarray
    metrics: dict = field(default_factory=dict)


def evaluation_windows(frames, S, horizon, target_index):
    """Dense stride-1 windows: inputs (B, S, c) and targets (B, horizon, n_targets)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] < S + horizon:
        raise DataError(f"need at least {S + horizon} rows for evaluation, have {frames.shape[0]}")
    inputs, targets = window_arrays(frames, S, horizon)
    return inputs, targets[:, :, target_index]


def evaluate(model, frames, H=1, mode="iterative", params=None, target_names=None,
             timestamps=None, step=None, direct_models=None) -> ForecastRun:
    """Forecast every stride-1 window of ``frames`` and score it.

    ``frames`` is a normalized frame series whose first S rows are context;
    every target row lies after them. Raw-unit metrics are reported when
    normalization ``params`` and ``target_names`` are given.
    """
    layout = _layout(model)
    S, T = _dims(model)
    horizon = H * T
    inputs, truth = evaluation_windows(frames, S, horizon, layout.target_index)
    if mode == "iterative":
        last_ts = None
        if timestamps is not None:
            last_ts = np.asarray(timestamps, dtype="datetime64[s]")[S - 1:S - 1 + inputs.shape[0]]
        preds = predict_iterative_batch(model, inputs, H, last_ts, step)
    elif mode == "direct":
        if direct_models is None or len(direct_models) != H:
            raise ConfigError(f"direct mode needs {H} models")
        preds = predict_direct_batch(direct_models, inputs)
    elif mode == "single":
        if T != 1 or H != 1:
            raise ConfigError("single mode needs T=1 and H=1")
        preds = model.predict(inputs)
    else:
        raise ConfigError(f"unknown forecast mode {mode!r}")
    metrics = {"mse_norm": mse(truth, preds), "mae_norm": mae(truth, preds)}
    if params is not None and target_names is not None:
        names = list(target_names)
        raw_t = params.inverse(truth, names)
        raw_p = params.inverse(preds, names)
        metrics["mse_raw"] = mse(raw_t, raw_p)
        metrics["mae_raw"] = mae(raw_t, raw_p)
    return ForecastRun(model, params, S, T, H, mode, preds, truth, metrics)
