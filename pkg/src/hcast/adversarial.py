"""Conditional-GAN refinement of a pre-trained linear forecaster.

The discriminator is a small MLP (dense -> LeakyReLU -> batch norm ->
dropout, twice, then a sigmoid unit) with optional spectral normalization.
Every gradient, including the gradient-penalty double backward, is written
out by hand for this fixed architecture.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError, TrainingDiverged
from .models import AdamState, ForecastModel, adam_step, evaluate_mse

log = logging.getLogger(__name__)

P_CLAMP = 1e-7
SN_EPS = 1e-12
GP_EPS = 1e-12
BN_EPS = 1e-3


# ----------------------------------------------------------------- primitives

def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bce(p, label):
    """Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    return -(label * np.log(p) + (1.0 - label) * np.log(1.0 - p))


def bce_logit_grad(p, label):
    """d bce / d logit, zero where the clamp is active."""
    inside = (p > P_CLAMP) & (p < 1.0 - P_CLAMP)
    return np.where(inside, p - label, 0.0)


def _unit(v):
    n = np.linalg.norm(v)
    return v / max(n, SN_EPS)


def power_iteration(W, u, iters=1):
    """Return (u, v, sigma) after ``iters`` rounds of power iteration on W."""
    v = _unit(W.T @ u)
    for _ in range(iters):
        v = _unit(W.T @ u)
        u = _unit(W @ v)
    return u, v, float(u @ W @ v)


def spectral_normalize(W, u, iters=1):
    """Divide W by its power-iteration estimate of the top singular value.

    Returns the normalized matrix and the updated left vector. A zero matrix
    comes back unchanged.
    """
    W = np.asarray(W, dtype=np.float64)
    if not np.any(u):
        raise DataError("power-iteration vector must be nonzero")
    u, v, sigma = power_iteration(W, np.asarray(u, dtype=np.float64), iters)
    if sigma <= SN_EPS:
        return W.copy(), u
    return W / sigma, u


def _leaky(h, slope):
    return np.where(h > 0, h, slope * h)


def _leaky_grad(h, slope):
    return np.where(h > 0, 1.0, slope)


# -------------------------------------------------------------- discriminator

class DiscriminatorNet:
    """MLP discriminator over ``[condition, candidate]`` rows.

    ``cond_dim`` leading input columns hold the condition; the rest hold the
    candidate forecast. Gradient penalties differentiate w.r.t. the candidate
    block only.
    """
    WEIGHTS = ("W1", "W2", "W3")

    def __init__(self, in_dim, cond_dim=0, hidden=(128, 64), slope=0.2, momentum=0.8,
                 dropout=0.3, spectral_norm=True, seed=0, sn_warmup=5):
        if not 0 <= cond_dim < in_dim:
            raise ConfigError(f"cond_dim {cond_dim} must lie in [0, in_dim={in_dim})")
        self.in_dim, self.cond_dim = int(in_dim), int(cond_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.slope, self.momentum, self.dropout = slope, momentum, dropout
        self.spectral_norm = spectral_norm
        rng = np.random.default_rng(seed)
        h1, h2 = self.hidden
        p = {}
        for name, (fan_out, fan_in) in zip(self.WEIGHTS, [(h1, in_dim), (h2, h1), (1, h2)]):
            bound = 1.0 / math.sqrt(fan_in)
            p[name] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            p["b" + name[1]] = rng.uniform(-bound, bound, size=fan_out)
        p["g1"], p["be1"] = np.ones(h1), np.zeros(h1)
        p["g2"], p["be2"] = np.ones(h2), np.zeros(h2)
        self.params = p
        self.running = {"m1": np.zeros(h1), "v1": np.ones(h1), "m2": np.zeros(h2), "v2": np.ones(h2)}
        self.sn = {}
        for name in self.WEIGHTS:
            u = _unit(rng.normal(size=p[name].shape[0]))
            self.sn[name] = power_iteration(p[name], u, sn_warmup)

    # -- spectral norm ------------------------------------------------------

    def power_iterate(self, iters=1):
        for name in self.WEIGHTS:
            u = self.sn[name][0]
            self.sn[name] = power_iteration(self.params[name], u, iters)

    def _sigma(self, name):
        u, v, _ = self.sn[name]
        return float(u @ self.params[name] @ v)

    def weights(self) -> dict:
        """Effective (spectrally normalized, if enabled) weight matrices."""
        if not self.spectral_norm:
            return {n: self.params[n] for n in self.WEIGHTS}
        out = {}
        for n in self.WEIGHTS:
            s = self._sigma(n)
            out[n] = self.params[n] / s if s > SN_EPS else self.params[n]
        return out

    def _sn_backward(self, grads, eff):
        # sigma = u^T W v with u, v held fixed
        if not self.spectral_norm:
            return grads
        for n in self.WEIGHTS:
            s = self._sigma(n)
            if s <= SN_EPS:
                continue
            u, v, _ = self.sn[n]
            G = grads[n]
            grads[n] = (G - np.sum(G * eff[n]) * np.outer(u, v)) / s
        return grads

    # -- forward / backward -------------------------------------------------

    def forward(self, x, mode="train", rng=None, update_stats=True):
        """Return (probabilities (B,), cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DataError(f"discriminator expects (B, {self.in_dim}) input, got {x.shape}")
        train = mode == "train"
        if train and x.shape[0] < 2:
            raise DataError("batch norm needs at least 2 samples in train mode")
        if mode not in ("train", "eval"):
            raise ConfigError(f"unknown mode {mode!r}")
        if train and rng is None and self.dropout > 0:
            raise ConfigError("train mode with dropout needs an rng")
        p, W = self.params, self.weights()
        cache = {"x": x, "W": W, "train": train}
        a_in = x
        for i in (1, 2):
            h = a_in @ W[f"W{i}"].T + p[f"b{i}"]
            a = _leaky(h, self.slope)
            if train:
                mu, var = a.mean(axis=0), a.var(axis=0)
                if update_stats:
                    m = self.momentum
                    self.running[f"m{i}"] = m * self.running[f"m{i}"] + (1 - m) * mu
                    self.running[f"v{i}"] = m * self.running[f"v{i}"] + (1 - m) * var
            else:
                mu, var = self.running[f"m{i}"], self.running[f"v{i}"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mu) * inv
            n = p[f"g{i}"] * xhat + p[f"be{i}"]
            if train and self.dropout > 0:
                mask = (rng.random(n.shape) >= self.dropout) / (1.0 - self.dropout)
            else:
                mask = np.ones_like(n)
            cache[i] = {"in": a_in, "h": h, "xhat": xhat, "inv": inv, "mask": mask}
            a_in = n * mask
        logit = (a_in @ W["W3"].T + p["b3"])[:, 0]
        cache["in3"] = a_in
        cache["logit"] = logit
        return sigmoid(logit), cache

    def backward(self, cache, dlogit):
        """Gradients w.r.t. raw parameters and the input, given dL/dlogit (B,)."""
        p, W = self.params, cache["W"]
        dlogit = np.asarray(dlogit, dtype=np.float64)[:, None]
        g = {"W3": dlogit.T @ cache["in3"], "b3": dlogit.sum(axis=0)}
        dout = dlogit @ W["W3"]
        for i in (2, 1):
            c = cache[i]
            dn = dout * c["mask"]
            g[f"g{i}"] = np.sum(dn * c["xhat"], axis=0)
            g[f"be{i}"] = dn.sum(axis=0)
            dxhat = dn * p[f"g{i}"]
            if cache["train"]:
                B = dxhat.shape[0]
                da = c["inv"] / B * (B * dxhat - dxhat.sum(axis=0) - c["xhat"] * np.sum(dxhat * c["xhat"], axis=0))
            else:
                da = dxhat * c["inv"]
            dh = da * _leaky_grad(c["h"], self.slope)
            g[f"W{i}"] = dh.T @ c["in"]
            g[f"b{i}"] = dh.sum(axis=0)
            dout = dh @ W[f"W{i}"]
        return self._sn_backward(g, W), dout

    def input_gradient(self, x):
        """d D(x) / d x in eval mode, shape (B, in_dim)."""
        prob, cache = self.forward(x, mode="eval")
        _, dx = self.backward(cache, prob * (1.0 - prob))
        return dx

    def copy(self) -> "DiscriminatorNet":
        out = object.__new__(DiscriminatorNet)
        out.__dict__.update(self.__dict__)
        out.params = {k: v.copy() for k, v in self.params.items()}
        out.running = {k: v.copy() for k, v in self.running.items()}
        out.sn = {k: (u.copy(), v.copy(), s) for k, (u, v, s) in self.sn.items()}
        return out


def discriminator_forward(d: DiscriminatorNet, candidate, condition, mode="eval", rng=None):
    """Probability that ``candidate`` is real given ``condition`` (batched)."""
    candidate = np.asarray(candidate, dtype=np.float64)
    condition = np.asarray(condition, dtype=np.float64)
    B = candidate.shape[0]
    x = np.concatenate([condition.reshape(B, -1), candidate.reshape(B, -1)], axis=1)
    return d.forward(x, mode=mode, rng=rng)[0]


# ------------------------------------------------------------ gradient penalty

def gradient_penalty(d: DiscriminatorNet, real, fake, condition, lam=10.0, alpha=None, rng=None):
    """Penalty ``lam * mean((||dD/dx_hat|| - 1)^2)`` on interpolated candidates.

    Batch norm uses running statistics and dropout is off, so the input
    gradient depends on x_hat alone. Returns (value, parameter gradients).
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    condition = np.asarray(condition, dtype=np.float64)
    if fake.shape != real.shape or condition.shape[0] != real.shape[0]:
        raise DataError(f"gradient_penalty: mismatched batches {real.shape} / {fake.shape} / {condition.shape}")
    B = real.shape[0]
    real, fake = real.reshape(B, -1), fake.reshape(B, -1)
    condition = condition.reshape(B, -1)
    if alpha is None:
        alpha = rng.uniform(size=(B, 1))
    alpha = np.asarray(alpha, dtype=np.float64).reshape(B, 1)
    x = np.concatenate([condition, alpha * real + (1.0 - alpha) * fake], axis=1)

    prob, cache = d.forward(x, mode="eval")
    p, W, cd = d.params, cache["W"], d.cond_dim
    w3 = W["W3"][0]
    s = {i: p[f"g{i}"] * cache[i]["inv"] for i in (1, 2)}
    m = {i: _leaky_grad(cache[i]["h"], d.slope) for i in (1, 2)}

    # input gradient of the logit: G0 = W1^T (m1 s1 W2^T (m2 s2 w3))
    r2 = m[2] * s[2] * w3
    q1 = r2 @ W["W2"]
    r1 = m[1] * s[1] * q1
    G0 = (r1 @ W["W1"])[:, cd:]
    sp = prob * (1.0 - prob)
    Q = np.sum(G0 * G0, axis=1)
    norm = np.sqrt(sp * sp * Q + GP_EPS)
    value = lam * float(np.mean((norm - 1.0) ** 2))

    dnorm = lam * 2.0 * (norm - 1.0) / B
    # path 1: through sigma'(logit)
    dlogit = dnorm * sp * (sp * (1.0 - 2.0 * prob)) * Q / norm
    grads, _ = d.backward(cache, dlogit)
    # backward() already applied the spectral-norm chain rule; path 2 works on
    # effective weights and is chained separately below
    dG = np.zeros((B, d.in_dim))
    dG[:, cd:] = (dnorm * sp * sp / norm)[:, None] * G0
    g2 = {n: np.zeros_like(W[n]) for n in d.WEIGHTS}
    g2["W1"] = r1.T @ dG
    dr1 = dG @ W["W1"].T
    dq1 = m[1] * s[1] * dr1
    ds1 = np.sum(m[1] * q1 * dr1, axis=0)
    g2["W2"] = r2.T @ dq1
    dr2 = dq1 @ W["W2"].T
    ds2 = np.sum(m[2] * w3 * dr2, axis=0)
    g2["W3"] = np.sum(m[2] * s[2] * dr2, axis=0)[None, :]
    g2 = d._sn_backward(g2, W)
    for n in d.WEIGHTS:
        grads[n] = grads[n] + g2[n]
    grads["g1"] = grads["g1"] + ds1 * cache[1]["inv"]
    grads["g2"] = grads["g2"] + ds2 * cache[2]["inv"]
    return value, grads


# ------------------------------------------------------------------- generator

def inject_noise(condition, noise_dim, rng=None, z=None):
    """Append ``noise_dim`` standard-normal values to each flattened condition.

    Returns (augmented, z). ``noise_dim == 0`` leaves the condition as is.
    """
    condition = np.asarray(condition, dtype=np.float64)
    B = condition.shape[0]
    flat = condition.reshape(B, -1)
    if noise_dim == 0:
        return flat, np.zeros((B, 0))
    if z is None:
        z = rng.standard_normal((B, noise_dim))
    return np.concatenate([flat, z], axis=1), z


class Generator:
    """A forecaster plus zero-initialized weights for appended noise inputs.

    With z = 0 the output equals the wrapped model's.
    """

    def __init__(self, model: ForecastModel, noise_dim=0, noise_W=None):
        self.model = model
        self.noise_dim = int(noise_dim)
        out = model.T * model.n_targets
        self.noise_W = np.zeros((out, self.noise_dim)) if noise_W is None else noise_W

    @property
    def kind(self):
        return self.model.kind

    def forward(self, feats, z=None):
        yhat, cache = self.model.forward(feats)
        if self.noise_dim and z is not None:
            yhat = yhat + (z @ self.noise_W.T).reshape(yhat.shape)
        return yhat, (cache, z)

    def backward(self, cache, dy):
        inner, z = cache
        grads = self.model.backward(inner, dy)
        if self.noise_dim:
            dflat = dy.reshape(dy.shape[0], -1)
            grads["noise_W"] = dflat.T @ z if z is not None else np.zeros_like(self.noise_W)
        return grads

    @property
    def params(self) -> dict:
        out = dict(self.model.params)
        if self.noise_dim:
            out["noise_W"] = self.noise_W
        return out

    def set_params(self, params):
        self.model.params = {k: v.copy() for k, v in params.items() if k != "noise_W"}
        if self.noise_dim:
            self.noise_W = params["noise_W"].copy()

    def predict(self, frames):
        return self.model.predict(frames)

    def copy(self) -> "Generator":
        return Generator(self.model.copy(), self.noise_dim, self.noise_W.copy())


# -------------------------------------------------------------------- training

@dataclass(frozen=True)
class GanConfig:
    gen_lr: float = 2e-4
    gen_betas: tuple = (0.5, 0.999)
    disc_lr: float = 1e-4
    disc_betas: tuple = (0.5, 0.999)
    lambda_gp: float = 10.0
    epochs: int = 200
    patience: int = 10
    batch_size: int = 64
    noise_dim: int = 16
    hidden: tuple = (128, 64)
    slope: float = 0.2
    momentum: float = 0.8
    dropout: float = 0.3
    spectral_norm: bool = True
    gradient_penalty: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (self.gen_lr > 0 and self.disc_lr > 0):
            raise ConfigError("GAN learning rates must be positive")
        if self.lambda_gp < 0:
            raise ConfigError("lambda_gp must be >= 0")
        if self.epochs < 0 or self.patience < 1 or self.batch_size < 2 or self.noise_dim < 0:
            raise ConfigError(f"invalid GAN config {self}")


@dataclass
class GanTrainState:
    generator: Generator
    discriminator: DiscriminatorNet
    gen_adam: AdamState
    disc_adam: AdamState
    epoch: int = 0
    best_params: dict | None = None
    best_val: float = math.inf


def _pack(cond, cand):
    B = cond.shape[0]
    return np.concatenate([cond.reshape(B, -1), cand.reshape(B, -1)], axis=1)


def discriminator_step(state: GanTrainState, cond, real, fake, cfg: GanConfig, rng):
    """One update of the discriminator; returns (L_D, L_GP, mean p_real, mean p_fake)."""
    d = state.discriminator
    if d.spectral_norm:
        d.power_iterate()
    p_real, c_real = d.forward(_pack(cond, real), "train", rng)
    p_fake, c_fake = d.forward(_pack(cond, fake), "train", rng)
    B = real.shape[0]
    l_real = float(np.mean(bce(p_real, 1.0)))
    l_fake = float(np.mean(bce(p_fake, 0.0)))
    g_real, _ = d.backward(c_real, bce_logit_grad(p_real, 1.0) / B)
    g_fake, _ = d.backward(c_fake, bce_logit_grad(p_fake, 0.0) / B)
    grads = {k: g_real[k] + g_fake[k] for k in g_real}
    l_gp = 0.0
    if cfg.gradient_penalty and cfg.lambda_gp > 0:
        l_gp, g_gp = gradient_penalty(d, real, fake, cond, cfg.lambda_gp, rng=rng)
        grads = {k: grads[k] + g_gp[k] for k in grads}
    adam_step(state.disc_adam, d.params, grads)
    return l_real + l_fake + l_gp, l_gp, p_real, p_fake


def generator_step(state: GanTrainState, feats, cond, z, rng):
    """One adversarial update of the generator; returns L_G."""
    g, d = state.generator, state.discriminator
    fake, gcache = g.forward(feats, z)
    B = fake.shape[0]
    prob, dcache = d.forward(_pack(cond, fake), "train", rng, update_stats=False)
    loss = float(np.mean(bce(prob, 1.0)))
    _, dx = d.backward(dcache, bce_logit_grad(prob, 1.0) / B)
    dfake = dx[:, d.cond_dim:].reshape(fake.shape)
    grads = g.backward(gcache, dfake)
    params = g.params
    adam_step(state.gen_adam, params, grads)
    g.set_params(params)
    return loss


def condition_of(model: ForecastModel, frames) -> np.ndarray:
    """Discriminator condition: the look-back window of the target channels."""
    frames = np.asarray(frames, dtype=np.float64)
    cond = frames[:, :, model.layout.target_index]
    return cond.reshape(cond.shape[0], -1)


def train_gan(model: ForecastModel, train, val, cfg: GanConfig = GanConfig()):
    """Adversarially refine ``model``; returns (Generator, per-epoch log).

    The returned generator holds the weights of the epoch with the lowest
    validation MSE (evaluated with zero noise). With ``epochs == 0`` it
    wraps an unchanged copy of ``model``.
    """
    Xtr, Ytr = train
    Xva, Yva = val
    if len(Xtr) < 2 or len(Xva) == 0:
        raise DataError("train_gan needs at least 2 training windows and 1 validation window")
    gen = Generator(model.copy(), cfg.noise_dim)
    if cfg.epochs == 0:
        return gen, []

    feats = gen.model.featurize(Xtr)
    va_feats = gen.model.featurize(Xva)
    cond = condition_of(model, Xtr)
    real_all = Ytr.reshape(Ytr.shape[0], -1)
    in_dim = cond.shape[1] + real_all.shape[1]
    disc = DiscriminatorNet(in_dim, cond.shape[1], cfg.hidden, cfg.slope, cfg.momentum,
                            cfg.dropout, cfg.spectral_norm, seed=cfg.seed + 1)
    state = GanTrainState(
        gen, disc,
        AdamState(lr=cfg.gen_lr, beta1=cfg.gen_betas[0], beta2=cfg.gen_betas[1]),
        AdamState(lr=cfg.disc_lr, beta1=cfg.disc_betas[0], beta2=cfg.disc_betas[1]),
    )
    rng = np.random.default_rng([cfg.seed, 3])
    n = cond.shape[0]
    wait, saturated_run = 0, 0
    records = []
    for epoch in range(1, cfg.epochs + 1):
        state.epoch = epoch
        order = rng.permutation(n)
        sums = np.zeros(3)
        n_batches = 0
        probs = []
        for bi, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            if len(idx) < 2:
                continue
            bf = tuple(f[idx] for f in feats)
            c, real = cond[idx], real_all[idx]
            z = rng.standard_normal((len(idx), cfg.noise_dim)) if cfg.noise_dim else None
            fake = gen.forward(bf, z)[0].reshape(len(idx), -1)
            try:
                l_d, l_gp, p_real, p_fake = discriminator_step(state, c, real, fake, cfg, rng)
                z = rng.standard_normal((len(idx), cfg.noise_dim)) if cfg.noise_dim else None
                l_g = generator_step(state, bf, c, z, rng)
            except NumericalError as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch {bi}: {exc}", epoch, bi) from exc
            if not all(math.isfinite(v) for v in (l_d, l_g, l_gp)):
                raise TrainingDiverged(f"non-finite GAN loss at epoch {epoch}, batch {bi}", epoch, bi)
            sums += (l_d, l_g, l_gp)
            n_batches += 1
            probs.append(np.concatenate([p_real, p_fake]))
        val_mse = evaluate_mse(gen.model, None, Yva, feats=va_feats)
        if not math.isfinite(val_mse):
            raise TrainingDiverged(f"non-finite validation MSE at epoch {epoch}", epoch)
        if val_mse < state.best_val:
            state.best_val, wait = val_mse, 0
            state.best_params = {k: v.copy() for k, v in gen.params.items()}
        else:
            wait += 1
        allp = np.concatenate(probs)
        saturated = bool(np.all((allp < 1e-3) | (allp > 1 - 1e-3)))
        saturated_run = saturated_run + 1 if saturated else 0
        rec = {
            "epoch": epoch,
            "L_D": float(sums[0] / n_batches),
            "L_G": float(sums[1] / n_batches),
            "L_GP": float(sums[2] / n_batches),
            "val_mse": val_mse,
            "best_so_far": state.best_val,
        }
        if saturated_run >= 3:
            rec["warning"] = "discriminator saturated"
            log.warning("epoch %d: discriminator output saturated for %d epochs", epoch, saturated_run)
        records.append(rec)
        log.info("gan epoch %d  L_D=%.4f  L_G=%.4f  val_mse=%.6g", epoch, rec["L_D"], rec["L_G"], val_mse)
        if wait >= cfg.patience:
            break
    gen.set_params(state.best_params)
    return gen, records


def format_gan_log(records) -> str:
    lines = ["epoch,L_D,L_G,L_GP,val_mse,best_so_far"]
    for r in records:
        lines.append(f"{r['epoch']},{r['L_D']!r},{r['L_G']!r},{r['L_GP']!r},{r['val_mse']!r},{r['best_so_far']!r}")
    return "\n".join(lines) + "\n"
