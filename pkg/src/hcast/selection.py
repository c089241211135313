"""Train every candidate variant and keep the validation-loss argmin."""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .decompose import FeatureLayout
from .errors import ConfigError, NumericalError
from .models import VARIANTS, ForecastModel, TrainConfig, build_model, evaluate_mse, train_supervised

# simplest first; decides exact ties
PREFERENCE = ("Linear", "NLinear", "DLinear", "DELinear")


@dataclass
class CandidateResult:
    kind: str
    val_mse: float = float("nan")
    epochs: int = 0
    seconds: float = 0.0
    model: ForecastModel | None = None
    history: list = field(default_factory=list)
    error: str | None = None


@dataclass
class SelectionReport:
    results: list
    winner: str
    config_hash: str

    def result(self, kind) -> CandidateResult:
        return next(r for r in self.results if r.kind == kind)

    def to_csv(self) -> str:
        lines = ["variant,val_mse,epochs,seconds"]
        for r in self.results:
            lines.append(f"{r.kind},{r.val_mse!r},{r.epochs},{r.seconds:.3f}")
        return "\n".join(lines) + "\n"


def default_candidates(layout: FeatureLayout) -> list:
    """Linear, NLinear and DLinear always; DELinear when the embedding carries
    categorical or calendar channels."""
    cands = ["Linear", "NLinear", "DLinear"]
    if layout.has_context_channels:
        cands.append("DELinear")
    return cands


def check_candidates(candidates, layout: FeatureLayout) -> list:
    candidates = list(dict.fromkeys(candidates))
    if not candidates:
        raise ConfigError("at least one candidate variant is required")
    for kind in candidates:
        if kind not in VARIANTS:
            raise ConfigError(f"unknown candidate {kind!r}; choose from {VARIANTS}")
    if "DELinear" in candidates and not layout.has_context_channels:
        raise ConfigError("DELinear requested but the embedding has no categorical or temporal channels")
    return candidates


def config_hash(cfg: TrainConfig, S, T, layout: FeatureLayout, candidates) -> str:
    key = repr((cfg, S, T, layout.numeric, layout.targets, layout.kernel, layout.temporal,
                tuple(e.vocabulary for e in layout.encodings), tuple(candidates)))
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def _train_one(kind, S, T, layout, train, val, cfg) -> CandidateResult:
    start = time.perf_counter()
    try:
        model = build_model(kind, S, T, layout, seed=cfg.seed, bias=cfg.bias)
        model, history = train_supervised(model, train, val, cfg)
    except NumericalError as exc:
        return CandidateResult(kind, seconds=time.perf_counter() - start, error=str(exc))
    if history:
        best = min(h["val_mse"] for h in history)
    else:
        best = evaluate_mse(model, val[0], val[1])
    return CandidateResult(kind, best, len(history), time.perf_counter() - start, model, history)


def select_model(train, val, cfg: TrainConfig, S: int, T: int, layout: FeatureLayout,
                 candidates=None, n_jobs: int = 1):
    """Train each candidate with the same seed and data; return the best.

    ``train`` and ``val`` are (frames, targets) window arrays.
    """
    candidates = check_candidates(default_candidates(layout) if candidates is None else candidates, layout)
    if n_jobs > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_train_one, k, S, T, layout, train, val, cfg) for k in candidates]
            results = [f.result() for f in futures]
    else:
        results = [_train_one(k, S, T, layout, train, val, cfg) for k in candidates]

    ok = [r for r in results if r.error is None]
    if not ok:
        detail = "; ".join(f"{r.kind}: {r.error}" for r in results)
        raise NumericalError(f"all candidates failed: {detail}")
    winner = min(ok, key=lambda r: (r.val_mse, PREFERENCE.index(r.kind)))
    report = SelectionReport(results, winner.kind, config_hash(cfg, S, T, layout, candidates))
    return winner.model, report
