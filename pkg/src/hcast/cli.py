"""``hcast`` command line: prepare, train, evaluate, forecast, report.

Exit codes: 0 success, 1 numerical failure, 2 bad input or configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import container
from .adversarial import Generator, format_gan_log, train_gan
from .config import RunConfig, load_config, set_value
from .dataset import NormalizationParams, concat_tables, load_table, write_table
from .decompose import format_channel_map
from .errors import ConfigError, DataError, HcastError, NumericalError
from .forecast import (evaluate, evaluation_windows, mae, mse, persistence_forecast, predict_direct,
                       predict_iterative, predict_single)
from .models import VARIANTS
from .pipeline import PreparedData, build_windows, prepare
from .selection import select_model

log = logging.getLogger("hcast")

SPLITS = ("train", "val", "test")
RESULTS_HEADER = "dataset,variant,S,T,H,mode,mse_norm,mae_norm,mse_raw,mae_raw,seconds"


class StageError(HcastError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.cause = exc


# ------------------------------------------------------------------ artifacts

def _paths(cfg: RunConfig) -> dict:
    out = cfg.output_dir
    return {
        "prepared": os.path.join(out, "prepared"),
        "norm": os.path.join(out, "prepared", "normalization.txt"),
        "channel_map": os.path.join(out, "channel_map.txt"),
        "windows": os.path.join(out, "windows.txt"),
        "model": os.path.join(out, "model.hcast"),
        "selection": os.path.join(out, "selection_report.csv"),
        "gan_log": os.path.join(out, "gan_log.csv"),
        "results": os.path.join(out, "results.csv"),
        "forecast": os.path.join(out, "forecast.csv"),
    }


def write_normalization(params: NormalizationParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"mode = {params.mode}\n")
        for name, lo, hi in zip(params.names, params.lo, params.hi):
            fh.write(f"{name},{float(lo)!r},{float(hi)!r}\n")


def read_normalization(path) -> NormalizationParams:
    if not os.path.isfile(path):
        raise DataError(f"normalization file not found: {path} (run 'hcast prepare' first)")
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    mode = lines[0].split("=", 1)[1].strip()
    names, lo, hi = [], [], []
    for ln in lines[1:]:
        name, a, b = ln.rsplit(",", 2)
        names.append(name)
        lo.append(float(a))
        hi.append(float(b))
    return NormalizationParams(mode, tuple(names), np.array(lo), np.array(hi))


def load_prepared(cfg: RunConfig) -> PreparedData:
    p = _paths(cfg)
    tables = {}
    for name in SPLITS:
        path = os.path.join(p["prepared"], f"{name}.csv")
        if not os.path.isfile(path):
            raise DataError(f"prepared split not found: {path} (run 'hcast prepare' first)")
        tables[name] = load_table(path, cfg.schema)
    return PreparedData(tables["train"], tables["val"], tables["test"], read_normalization(p["norm"]))


def median_step(timestamps) -> np.timedelta64:
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    if len(ts) < 2:
        return np.timedelta64(3600, "s")
    gaps = np.diff(ts).astype(np.int64)
    return np.timedelta64(int(np.median(gaps)), "s")


# ------------------------------------------------------------------- commands

def cmd_prepare(cfg: RunConfig) -> PreparedData:
    p = _paths(cfg)
    try:
        table = load_table(cfg.data, cfg.schema)
        data = prepare(table, cfg.split_spec(), cfg.normalization, cfg.aggregate)
        win = build_windows(data, cfg.lookback, cfg.T, cfg.targets, cfg.kernel, cfg.temporal_features)
    except HcastError as exc:
        raise StageError("dataset", exc) from exc
    os.makedirs(p["prepared"], exist_ok=True)
    for name in SPLITS:
        write_table(getattr(data, name), os.path.join(p["prepared"], f"{name}.csv"))
    write_normalization(data.norm, p["norm"])
    with open(p["channel_map"], "w") as fh:
        fh.write(format_channel_map(win.layout.channel_map()))
    with open(p["windows"], "w") as fh:
        fh.write(f"S = {cfg.lookback}\nT = {cfg.T}\n")
        for name in SPLITS:
            fh.write(f"{name}_rows = {getattr(data, name).N}\n")
        fh.write(f"train_windows = {len(win.train[0])}\nval_windows = {len(win.val[0])}\n")
    print(f"prepared {cfg.dataset_name}: train={data.train.N} val={data.val.N} test={data.test.N} rows, "
          f"{len(win.train[0])} training windows, frame width {win.layout.frame_width}")
    return data


def _train_once(cfg, data, offset, skip_gan):
    try:
        win = build_windows(data, cfg.lookback, cfg.T, cfg.targets, cfg.kernel, cfg.temporal_features, offset)
    except HcastError as exc:
        raise StageError("decompose", exc) from exc
    try:
        selected, report = select_model(win.train, win.val, cfg.train_config(), cfg.lookback, cfg.T,
                                        win.layout, cfg.candidates)
    except HcastError as exc:
        raise StageError("selection", exc) from exc
    if skip_gan:
        return Generator(selected.copy(), 0), report, []
    try:
        gen, records = train_gan(selected, win.train, win.val, cfg.gan_config())
    except HcastError as exc:
        raise StageError("adversarial", exc) from exc
    return gen, report, records


def _direct_model_path(p, k):
    return p["model"] if k == 0 else p["model"].replace(".hcast", f"_{k}.hcast")


def cmd_train(cfg: RunConfig, skip_gan=False):
    p = _paths(cfg)
    data = load_prepared(cfg)
    n_models = cfg.H if cfg.mode == "direct" else 1
    reports, logs = [], []
    for k in range(n_models):
        gen, report, records = _train_once(cfg, data, k * cfg.T, skip_gan)
        extra = {"dataset": cfg.dataset_name, "seed": cfg.seed, "offset": k * cfg.T,
                 "config_hash": report.config_hash, "skip_gan": bool(skip_gan)}
        container.save(_direct_model_path(p, k), gen, data.norm, extra)
        reports.append(report)
        logs.append(records)
    with open(p["selection"], "w") as fh:
        fh.write(reports[0].to_csv())
    with open(p["gan_log"], "w") as fh:
        fh.write(format_gan_log(logs[0]))
    best = reports[0].result(reports[0].winner)
    msg = f"selected {reports[0].winner} (val MSE {best.val_mse:.6g})"
    if logs[0]:
        msg += f"; adversarial stage ran {len(logs[0])} epochs, best val MSE {min(r['val_mse'] for r in logs[0]):.6g}"
    print(msg)
    return reports, logs


def _load_model(path):
    try:
        return container.load(path)
    except HcastError as exc:
        raise StageError("model", exc) from exc


def _eval_frames(gen, data):
    """Last S validation rows as context, then the test split."""
    model = gen.model
    ctx = data.val.slice(max(0, data.val.N - model.S), data.val.N)
    table = concat_tables(ctx, data.test)
    try:
        frames = model.layout.frame(table)
    except (KeyError, ValueError) as exc:
        raise DataError(f"model layout does not match prepared data: {exc}") from None
    if frames.shape[1] != model.layout.frame_width:
        raise DataError(f"model expects frame width {model.layout.frame_width}, data has {frames.shape[1]}")
    return table, frames


def cmd_evaluate(cfg: RunConfig, horizons=None):
    p = _paths(cfg)
    gen, _, header = _load_model(p["model"])
    data = load_prepared(cfg)
    model = gen.model
    T = model.T
    if horizons is None:
        hs = [cfg.H]
    else:
        bad = [h for h in horizons if h < 1 or h % T]
        if bad:
            raise ConfigError(f"horizon sweep values must be positive multiples of T={T}, got {bad}")
        hs = [h // T for h in horizons]
    mode = cfg.mode
    direct = None
    if mode == "direct":
        direct = [_load_model(_direct_model_path(p, k))[0] for k in range(max(hs))]
    table, frames = _eval_frames(gen, data)
    step = median_step(table.timestamps)
    targets = list(model.layout.targets)
    rows = []
    for H in hs:
        start = time.perf_counter()
        try:
            run = evaluate(gen, frames, H, mode, data.norm, targets, table.timestamps, step,
                           direct[:H] if direct else None)
        except HcastError as exc:
            raise StageError("forecast-eval", exc) from exc
        secs = time.perf_counter() - start
        m = run.metrics
        rows.append((cfg.dataset_name, model.kind, model.S, T, H, mode,
                     m["mse_norm"], m["mae_norm"], m["mse_raw"], m["mae_raw"], secs))
        inputs, truth = evaluation_windows(frames, model.S, H * T, model.layout.target_index)
        base = persistence_forecast(inputs, H * T, model.layout.target_index)
        raw_t, raw_b = data.norm.inverse(truth, targets), data.norm.inverse(base, targets)
        rows.append((cfg.dataset_name, "Persistence", model.S, T, H, mode, mse(truth, base), mae(truth, base),
                     mse(raw_t, raw_b), mae(raw_t, raw_b), 0.0))
        print(f"{model.kind} H={H} (horizon {H * T}): MSE {m['mse_norm']:.6g}  MAE {m['mae_norm']:.6g}  "
              f"(raw MSE {m['mse_raw']:.6g}, MAE {m['mae_raw']:.6g}); persistence MSE {rows[-1][6]:.6g}")
    with open(p["results"], "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for r in rows:
            fh.write(",".join(f"{v!r}" if isinstance(v, float) else str(v) for v in r) + "\n")
    return rows


def cmd_forecast(cfg: RunConfig, steps=None):
    p = _paths(cfg)
    gen, norm, _ = _load_model(p["model"])
    data = load_prepared(cfg)
    model = gen.model
    table = concat_tables(data.train, data.val, data.test)
    if table.N < model.S:
        raise DataError(f"insufficient history: need {model.S} rows, have {table.N}")
    H = cfg.H if steps is None else steps
    if H < 1:
        raise ConfigError(f"forecast steps must be >= 1, got {H}")
    frames = model.layout.frame(table.slice(table.N - model.S, table.N))
    step = median_step(table.timestamps)
    last = table.timestamps[-1]
    if cfg.mode == "direct":
        models = [_load_model(_direct_model_path(p, k))[0] for k in range(H)]
        pred = predict_direct(models, frames, H)
    elif cfg.mode == "single":
        pred = predict_single(gen, frames)
    else:
        pred = predict_iterative(gen, frames, H, last, step)
    if not np.all(np.isfinite(pred)):
        raise NumericalError("forecast contains non-finite values")
    targets = list(model.layout.targets)
    raw = norm.inverse(pred, targets)
    times = last + step * np.arange(1, raw.shape[0] + 1)
    with open(p["forecast"], "w") as fh:
        fh.write(",".join([model.layout.datetime_name] + targets) + "\n")
        for t, row in zip(times, raw):
            fh.write(",".join([str(t).replace("T", " ")] + [repr(float(v)) for v in row]) + "\n")
    print(f"wrote {raw.shape[0]} forecast rows to {p['forecast']}")
    return times, raw


def cmd_report(cfg: RunConfig):
    p = _paths(cfg)
    found = False
    for key in ("selection", "gan_log", "results"):
        path = p[key]
        if not os.path.isfile(path):
            continue
        found = True
        with open(path) as fh:
            text = fh.read()
        if key == "gan_log":
            lines = text.strip().splitlines()
            text = "\n".join(lines[:1] + lines[1:][-5:]) + (f"\n({len(lines) - 1} epochs)" if len(lines) > 1 else "")
        print(f"== {os.path.basename(path)}\n{text.rstrip()}\n")
    if not found:
        raise DataError(f"no reports in {cfg.output_dir}; run 'hcast train' or 'hcast evaluate' first")


# ----------------------------------------------------------------- entry point

def _int_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--normalization", choices=("minmax", "zscore"))
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
        return sp

    add("prepare", "impute, split, normalize and window the data")
    sp = add("train", "select a variant and refine it adversarially")
    sp.add_argument("--skip-gan", action="store_true", help="stop after model selection")
    sp.add_argument("--candidates", help="comma-separated subset of " + ",".join(VARIANTS))
    sp.add_argument("--model", choices=VARIANTS, help="train only this variant")
    sp = add("evaluate", "score the trained model on the test split")
    sp.add_argument("--horizon-sweep", type=_int_list, help="comma-separated horizons, multiples of T")
    sp = add("forecast", "forecast past the end of the data")
    sp.add_argument("--steps", type=int, help="number of iterations H (default: config H)")
    add("report", "print saved selection, adversarial and evaluation reports")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg = set_value(cfg, *item.split("=", 1))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.normalization:
        cfg = dataclasses.replace(cfg, normalization=args.normalization)
    if getattr(args, "candidates", None):
        cfg = set_value(cfg, "candidates", args.candidates)
    if getattr(args, "model", None):
        cfg = dataclasses.replace(cfg, candidates=(args.model,))
    return cfg.validate()


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "prepare":
            cmd_prepare(cfg)
        elif args.command == "train":
            cmd_train(cfg, skip_gan=args.skip_gan)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.horizon_sweep)
        elif args.command == "forecast":
            cmd_forecast(cfg, args.steps)
        else:
            cmd_report(cfg)
    except HcastError as exc:
        cause = exc.cause if isinstance(exc, StageError) else exc
        print(f"hcast {args.command}: error: {exc}", file=sys.stderr)
        return 1 if isinstance(cause, NumericalError) else 2
    except OSError as exc:
        print(f"hcast {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
