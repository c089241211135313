"""End-to-end glue: tables -> frames -> windows -> selection -> GAN."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversarial import GanConfig, Generator, train_gan
from .dataset import (NormalizationParams, SplitSpec, TimeTable, aggregate_table, impute_missing,
                      normalize, temporal_split)
from .decompose import FeatureLayout, fit_layout
from .errors import DataError
from .kernels import window_arrays
from .models import TrainConfig
from .selection import select_model


@dataclass
class PreparedData:
    train: TimeTable
    val: TimeTable
    test: TimeTable
    norm: NormalizationParams


def prepare(table: TimeTable, split: SplitSpec = SplitSpec(), mode: str = "minmax",
            aggregate: int = 1) -> PreparedData:
    """Aggregate, impute, split, then scale every split with train-fitted params."""
    table = impute_missing(aggregate_table(table, aggregate))
    train, val, test = temporal_split(table, split)
    train, norm = normalize(train, mode=mode)
    val, _ = normalize(val, norm)
    test, _ = normalize(test, norm)
    return PreparedData(train, val, test, norm)


def windows_with_context(history, frames, S, horizon, target_index, offset=0):
    """Windows whose targets lie in ``frames``; inputs may reach back into ``history``."""
    ctx = history[-S:] if history is not None and len(history) else np.zeros((0, frames.shape[1]))
    series = np.concatenate([ctx, frames], axis=0)
    need = S + horizon + offset
    if series.shape[0] < need:
        raise DataError(f"split has {frames.shape[0]} rows (+{len(ctx)} context); need {need}")
    inputs, targets = window_arrays(series, S, horizon, 1, offset)
    return inputs, targets[:, :, target_index]


@dataclass
class SplitWindows:
    layout: FeatureLayout
    frames: dict
    train: tuple
    val: tuple


def build_windows(data: PreparedData, S: int, T: int, targets=None, kernel: int = 25,
                  temporal: bool = True, offset: int = 0) -> SplitWindows:
    layout = fit_layout(data.train, targets, kernel, temporal)
    frames = {name: layout.frame(getattr(data, name)) for name in ("train", "val", "test")}
    tidx = layout.target_index
    train = windows_with_context(None, frames["train"], S, T, tidx, offset)
    val = windows_with_context(frames["train"], frames["val"], S, T, tidx, offset)
    return SplitWindows(layout, frames, train, val)


@dataclass
class PipelineResult:
    generator: Generator
    selected: object
    report: object
    gan_log: list


def run_pipeline(windows: SplitWindows, S: int, T: int, train_cfg: TrainConfig,
                 gan_cfg: GanConfig | None, candidates=None) -> PipelineResult:
    """Selection then (unless ``gan_cfg`` is None) adversarial refinement."""
    selected, report = select_model(windows.train, windows.val, train_cfg, S, T, windows.layout, candidates)
    if gan_cfg is None:
        return PipelineResult(Generator(selected.copy(), 0), selected, report, [])
    gen, log = train_gan(selected, windows.train, windows.val, gan_cfg)
    return PipelineResult(gen, selected, report, log)
