"""Linear forecaster variants with hand-derived gradients, Adam, and
early-stopped minibatch training."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .decompose import FeatureLayout, decompose
from .errors import ConfigError, DataError, NumericalError, TrainingDiverged

VARIANTS = ("Linear", "NLinear", "DLinear", "DELinear")


# ---------------------------------------------------------------- per-sample ops

def _check(W, x, what):
    if W.shape[1] != x.shape[0]:
        raise DataError(f"{what}: weight expects input length {W.shape[1]}, got {x.shape[0]}")


def forward_linear(W, b, x):
    W, x = np.asarray(W, float), np.asarray(x, float)
    _check(W, x, "forward_linear")
    return W @ x + (0.0 if b is None else b)


def forward_nlinear(W, b, x):
    W, x = np.asarray(W, float), np.asarray(x, float)
    _check(W, x, "forward_nlinear")
    last = x[-1]
    return W @ (x - last) + (0.0 if b is None else b) + last


def forward_dlinear(Ws, bs, Wtr, btr, x_s, x_tr):
    x_s, x_tr = np.asarray(x_s, float), np.asarray(x_tr, float)
    if x_s.shape != x_tr.shape:
        raise DataError(f"forward_dlinear: seasonal {x_s.shape} and trend {x_tr.shape} differ")
    return forward_linear(Ws, bs, x_s) + forward_linear(Wtr, btr, x_tr)


def forward_delinear(W, b, D, T, n_targets, channel_map=None):
    """``D`` is one embedded window (S, d); returns (T, n_targets)."""
    if channel_map is None:
        raise ConfigError("forward_delinear needs the embedding channel map")
    D = np.asarray(D, float)
    if D.ndim != 2 or D.shape[1] != len(channel_map):
        raise DataError(f"forward_delinear: window shape {D.shape} does not match {len(channel_map)} channels")
    out = forward_linear(W, b, D.reshape(-1))
    if out.size != T * n_targets:
        raise DataError(f"forward_delinear: output size {out.size} != T*targets {T * n_targets}")
    return out.reshape(T, n_targets)


# ------------------------------------------------------------------------ models

class ForecastModel:
    """Maps frame windows (B, S, c) to forecasts (B, T, n_targets).

    Subclasses provide ``featurize`` (model-specific view of the inputs, may
    be precomputed once per dataset), ``forward`` and ``backward``.
    """
    kind = ""

    def __init__(self, S, T, layout: FeatureLayout, params: dict, bias=True):
        self.S, self.T, self.layout = int(S), int(T), layout
        self.params = params
        self.bias = bias

    @property
    def n_targets(self) -> int:
        return len(self.layout.targets)

    def _targets(self, frames):
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1] != self.S or frames.shape[2] != self.layout.frame_width:
            raise DataError(
                f"{self.kind}: expected windows of shape (B, {self.S}, {self.layout.frame_width}), got {frames.shape}"
            )
        return frames, frames[:, :, self.layout.target_index]

    def predict(self, frames) -> np.ndarray:
        return self.forward(self.featurize(frames))[0]

    def copy(self) -> "ForecastModel":
        out = copy.copy(self)
        out.params = {k: v.copy() for k, v in self.params.items()}
        return out

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def _channel_matmul(W, x):
    # x: (B, L, d) -> (B, T, d) with the same W applied to every channel
    B, L, d = x.shape
    flat = x.transpose(0, 2, 1).reshape(B * d, L)
    return (flat @ W.T).reshape(B, d, -1).transpose(0, 2, 1)


def _channel_grad(dy, x):
    B, T, d = dy.shape
    g = dy.transpose(0, 2, 1).reshape(B * d, T)
    xf = x.transpose(0, 2, 1).reshape(B * d, -1)
    return g.T @ xf


class LinearModel(ForecastModel):
    kind = "Linear"

    def featurize(self, frames):
        return (self._targets(frames)[1],)

    def forward(self, feats):
        (x,) = feats
        y = _channel_matmul(self.params["W"], x)
        if self.bias:
            y = y + self.params["b"][None, :, None]
        return y, feats

    def backward(self, cache, dy):
        (x,) = cache
        grads = {"W": _channel_grad(dy, x)}
        if self.bias:
            grads["b"] = dy.sum(axis=(0, 2))
        return grads


class NLinearModel(ForecastModel):
    kind = "NLinear"

    def featurize(self, frames):
        x = self._targets(frames)[1]
        last = x[:, -1:, :]
        return (x - last, last)

    def forward(self, feats):
        xc, last = feats
        y = _channel_matmul(self.params["W"], xc) + last
        if self.bias:
            y = y + self.params["b"][None, :, None]
        return y, feats

    def backward(self, cache, dy):
        xc, _ = cache
        grads = {"W": _channel_grad(dy, xc)}
        if self.bias:
            grads["b"] = dy.sum(axis=(0, 2))
        return grads


class DLinearModel(ForecastModel):
    kind = "DLinear"

    def featurize(self, frames):
        x = self._targets(frames)[1]
        parts = decompose(x, self.layout.kernel)
        return (parts.seasonal, parts.trend)

    def forward(self, feats):
        xs, xt = feats
        p = self.params
        y = _channel_matmul(p["Ws"], xs) + _channel_matmul(p["Wt"], xt)
        if self.bias:
            y = y + (p["bs"] + p["bt"])[None, :, None]
        return y, feats

    def backward(self, cache, dy):
        xs, xt = cache
        grads = {"Ws": _channel_grad(dy, xs), "Wt": _channel_grad(dy, xt)}
        if self.bias:
            db = dy.sum(axis=(0, 2))
            grads["bs"] = db
            grads["bt"] = db.copy()
        return grads


class DELinearModel(ForecastModel):
    kind = "DELinear"

    def featurize(self, frames):
        frames, _ = self._targets(frames)
        D = self.layout.embed(frames)
        return (D.reshape(D.shape[0], -1),)

    def forward(self, feats):
        (D,) = feats
        y = D @ self.params["W"].T
        if self.bias:
            y = y + self.params["b"]
        return y.reshape(D.shape[0], self.T, self.n_targets), feats

    def backward(self, cache, dy):
        (D,) = cache
        g = dy.reshape(dy.shape[0], -1)
        grads = {"W": g.T @ D}
        if self.bias:
            grads["b"] = g.sum(axis=0)
        return grads


MODEL_CLASSES = {
    "Linear": LinearModel,
    "NLinear": NLinearModel,
    "DLinear": DLinearModel,
    "DELinear": DELinearModel,
}


def param_shapes(kind, S, T, layout: FeatureLayout, bias=True) -> dict:
    if kind in ("Linear", "NLinear"):
        shapes = {"W": (T, S), "b": (T,)}
    elif kind == "DLinear":
        shapes = {"Ws": (T, S), "bs": (T,), "Wt": (T, S), "bt": (T,)}
    elif kind == "DELinear":
        out, inp = T * len(layout.targets), S * layout.embed_width
        shapes = {"W": (out, inp), "b": (out,)}
    else:
        raise ConfigError(f"unknown model variant {kind!r}; choose from {VARIANTS}")
    if not bias:
        shapes = {k: v for k, v in shapes.items() if not k.startswith("b")}
    return shapes


def build_model(kind, S, T, layout: FeatureLayout, seed=0, bias=True) -> ForecastModel:
    """Fresh model with weights uniform in [-1/sqrt(L), 1/sqrt(L)], L = input length."""
    if kind == "DELinear" and not layout.has_context_channels:
        raise ConfigError("DELinear needs categorical or temporal channels in the embedding")
    shapes = param_shapes(kind, S, T, layout, bias)
    rng = np.random.default_rng(seed)
    fan_in = S * layout.embed_width if kind == "DELinear" else S
    bound = 1.0 / math.sqrt(fan_in)
    params = {name: rng.uniform(-bound, bound, size=shape) for name, shape in shapes.items()}
    return MODEL_CLASSES[kind](S, T, layout, params, bias)


# ------------------------------------------------------------------------- loss

def mse_loss(yhat, y):
    """Mean squared error and its gradient w.r.t. ``yhat``."""
    diff = yhat - y
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_and_grads(model: ForecastModel, frames, y):
    yhat, cache = model.forward(model.featurize(frames))
    loss, dy = mse_loss(yhat, y)
    return loss, model.backward(cache, dy)


# ------------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# --------------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    bias: bool = False

    def __post_init__(self):
        if self.max_epochs < 0 or self.patience < 1 or self.batch_size < 1:
            raise ConfigError(f"invalid training config {self}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")


def evaluate_mse(model: ForecastModel, frames, y, feats=None, chunk=4096) -> float:
    """MSE over all windows, accumulated in fixed-size chunks."""
    total, count = 0.0, 0
    if feats is None:
        feats = model.featurize(frames)
    n = feats[0].shape[0]
    for s in range(0, n, chunk):
        part = tuple(f[s:s + chunk] for f in feats)
        yhat = model.forward(part)[0]
        d = yhat - y[s:s + chunk]
        total += float(np.sum(d * d))
        count += d.size
    return total / count


def train_supervised(model: ForecastModel, train, val, cfg: TrainConfig = TrainConfig()):
    """Minibatch Adam on MSE with early stopping on validation MSE.

    ``train`` and ``val`` are (frames, targets) pairs. Returns a new model
    holding the best-validation weights and the per-epoch history.
    """
    Xtr, Ytr = train
    Xva, Yva = val
    if len(Xtr) == 0 or len(Xva) == 0:
        raise DataError("train_supervised needs nonempty train and validation windows")
    model = model.copy()
    tr_feats = model.featurize(Xtr)
    va_feats = model.featurize(Xva)
    n = tr_feats[0].shape[0]
    shuffle = np.random.default_rng([cfg.seed, 2])
    adam = AdamState(lr=cfg.lr)
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_val, wait = math.inf, 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            yhat, cache = model.forward(tuple(f[idx] for f in tr_feats))
            loss, dy = mse_loss(yhat, Ytr[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"{model.kind}: non-finite training loss at epoch {epoch}", epoch=epoch)
            total += loss * len(idx)
            adam_step(adam, model.params, model.backward(cache, dy))
        val_mse = evaluate_mse(model, None, Yva, feats=va_feats)
        if not math.isfinite(val_mse):
            raise TrainingDiverged(f"{model.kind}: non-finite validation loss at epoch {epoch}", epoch=epoch)
        history.append({"epoch": epoch, "train_loss": total / n, "val_mse": val_mse})
        if val_mse < best_val:
            best_val, wait = val_mse, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    model.params = best_params
    return model, history
