"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .adversarial import GanConfig
from .dataset import KINDS, SplitSpec
from .errors import ConfigError
from .models import VARIANTS, TrainConfig


def default_lookback(T: int) -> int:
    """S = T for short horizons, max(24, T/2) beyond 48 steps."""
    return T if T <= 48 else max(24, T // 2)


@dataclass
class RunConfig:
    data: str = ""
    schema: dict = field(default_factory=dict)
    targets: tuple | None = None
    dataset: str = ""
    S: int | None = None
    T: int = 24
    H: int = 1
    kernel: int = 25
    normalization: str = "minmax"
    candidates: tuple | None = None
    temporal_features: bool = True
    aggregate: int = 1
    mode: str = "iterative"
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    # supervised stage
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    bias: bool = False
    # adversarial stage
    gan_epochs: int = 200
    gan_patience: int = 10
    gan_batch_size: int = 64
    gen_lr: float = 2e-4
    gen_beta1: float = 0.5
    gen_beta2: float = 0.999
    disc_lr: float = 1e-4
    disc_beta1: float = 0.5
    disc_beta2: float = 0.999
    lambda_gp: float = 10.0
    noise_dim: int = 16
    spectral_norm: bool = True
    gradient_penalty: bool = True
    disc_hidden: tuple = (128, 64)
    disc_dropout: float = 0.3
    bn_momentum: float = 0.8
    leaky_slope: float = 0.2
    seed: int = 0
    output_dir: str = "hcast_out"

    @property
    def lookback(self) -> int:
        return default_lookback(self.T) if self.S is None else self.S

    @property
    def dataset_name(self) -> str:
        if self.dataset:
            return self.dataset
        return os.path.splitext(os.path.basename(self.data))[0] or "data"

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_frac, self.val_frac, self.test_frac)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.max_epochs, self.patience, self.batch_size, self.lr, self.seed, self.bias)

    def gan_config(self) -> GanConfig:
        return GanConfig(
            gen_lr=self.gen_lr, gen_betas=(self.gen_beta1, self.gen_beta2),
            disc_lr=self.disc_lr, disc_betas=(self.disc_beta1, self.disc_beta2),
            lambda_gp=self.lambda_gp, epochs=self.gan_epochs, patience=self.gan_patience,
            batch_size=self.gan_batch_size, noise_dim=self.noise_dim, hidden=tuple(self.disc_hidden),
            slope=self.leaky_slope, momentum=self.bn_momentum, dropout=self.disc_dropout,
            spectral_norm=self.spectral_norm, gradient_penalty=self.gradient_penalty, seed=self.seed,
        )

    def validate(self) -> "RunConfig":
        if not self.data:
            raise ConfigError("config is missing 'data'")
        if list(self.schema.values()).count("datetime") != 1:
            raise ConfigError("config must declare exactly one column as datetime")
        for name, kind in self.schema.items():
            if kind not in KINDS:
                raise ConfigError(f"column {name!r}: unknown kind {kind!r}")
        if self.T < 1 or self.H < 1 or self.lookback < 1:
            raise ConfigError(f"S, T and H must be positive (S={self.lookback}, T={self.T}, H={self.H})")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be a positive odd integer, got {self.kernel}")
        if self.normalization not in ("minmax", "zscore"):
            raise ConfigError(f"normalization must be minmax or zscore, got {self.normalization!r}")
        if self.mode not in ("iterative", "direct", "single"):
            raise ConfigError(f"mode must be iterative, direct or single, got {self.mode!r}")
        if self.mode == "single" and (self.T != 1 or self.H != 1):
            raise ConfigError("mode 'single' requires T = 1 and H = 1")
        if self.candidates is not None:
            bad = [c for c in self.candidates if c not in VARIANTS]
            if bad or not self.candidates:
                raise ConfigError(f"unknown candidates {bad}; choose from {VARIANTS}")
        if self.aggregate < 1:
            raise ConfigError("aggregate must be >= 1")
        self.split_spec()
        self.train_config()
        self.gan_config()
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_ALIASES = {"s": "S", "lookback": "S", "t": "T", "horizon": "T", "h": "H", "steps": "H", "target": "targets"}


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _convert(key, text):
    kind = _TYPES[key]
    if key in ("targets", "candidates"):
        return _list(text)
    if key == "disc_hidden":
        return tuple(int(s) for s in _list(text))
    if key == "S":
        return None if text.strip().lower() in ("", "auto") else int(text)
    if "bool" in kind:
        return _bool(text)
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text.strip()


def set_value(cfg: RunConfig, key: str, text: str) -> RunConfig:
    key = key.strip()
    key = _ALIASES.get(key.lower(), key if key in _TYPES else key.lower())
    if key == "schema" or key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        value = _convert(key, text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return replace(cfg, **{key: value})


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    cfg = RunConfig()
    schema = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.lower() == "column":
            if ":" not in value:
                raise ConfigError(f"line {lineno}: column lines look like 'column = name:kind'")
            name, kind = (s.strip() for s in value.rsplit(":", 1))
            if kind not in KINDS:
                raise ConfigError(f"line {lineno}: unknown column kind {kind!r}")
            if name in schema:
                raise ConfigError(f"line {lineno}: column {name!r} declared twice")
            schema[name] = kind
            continue
        try:
            cfg = set_value(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    cfg = replace(cfg, schema=schema)
    if cfg.data and not os.path.isabs(cfg.data):
        cfg = replace(cfg, data=os.path.normpath(os.path.join(base_dir, cfg.data)))
    if cfg.output_dir and not os.path.isabs(cfg.output_dir):
        cfg = replace(cfg, output_dir=os.path.normpath(os.path.join(base_dir, cfg.output_dir)))
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
