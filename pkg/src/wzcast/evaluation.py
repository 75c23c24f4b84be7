"""Split evaluation under normal / work-zone conditions, plus the
ablation harness over neighbor counts and fusion formulas."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .features import denormalize, stack_samples
from .metrics import MetricReport, compute_metrics, disruption_accuracy, segment_conditions
from .model import SPEED_WAVE_FORMULAS, ModelConfig, forward_batch
from .training import Datasets, TrainConfig, prepare_datasets, train

log = logging.getLogger(__name__)


def predict_samples(params, samples, data: Datasets, model_config: ModelConfig,
                    chunk: int = 64) -> np.ndarray:
    """Stacked (S, N, P) predictions in normalized units."""
    preds = []
    for lo in range(0, len(samples), chunk):
        xs, xc, slots, _, _ = stack_samples(samples[lo:lo + chunk])
        preds.append(forward_batch(params, xs, xc, slots, data.g_op, model_config).data)
    return np.concatenate(preds)


@dataclass(frozen=True)
class SplitEvaluation:
    """Condition-partitioned metric reports for one split."""

    all: MetricReport
    normal: MetricReport
    workzone: MetricReport
    disruption_accuracy: list[float | None]
    split: str
    horizon: int

    def report_for(self, condition: str) -> MetricReport:
        try:
            return {"all": self.all, "normal": self.normal,
                    "workzone": self.workzone}[condition]
        except KeyError:
            raise ConfigError(f"condition must be normal, workzone, or all, got '{condition}'") from None

    def to_dict(self) -> dict:
        return {"split": self.split, "horizon": self.horizon,
                "all": self.all.to_dict(), "normal": self.normal.to_dict(),
                "workzone": self.workzone.to_dict(),
                "disruption_accuracy": self.disruption_accuracy}


def evaluate_split(params, data: Datasets, model_config: ModelConfig, events,
                   split: str = "test", horizon: int | None = None,
                   radius_miles: float = 0.0,
                   disruption_threshold: float = 5.0) -> SplitEvaluation:
    """Denormalized metrics on one split, partitioned by work-zone state.

    `horizon` scores only the first `horizon` forecast steps (it must
    not exceed the model's horizon).
    """
    if split not in ("train", "val", "test"):
        raise ConfigError(f"split must be train, val, or test, got '{split}'")
    samples = getattr(data.splits, split)
    if not samples:
        raise DataError(f"split '{split}' has no samples")
    horizon = model_config.horizon if horizon is None else int(horizon)
    if not 1 <= horizon <= model_config.horizon:
        raise ConfigError(f"horizon {horizon} outside [1, {model_config.horizon}]")

    bundle = data.bundle
    pred = denormalize(predict_samples(params, samples, data, model_config),
                       bundle.vmin, bundle.vmax)[..., :horizon]
    _, _, _, y, y_mask = stack_samples(samples)
    truth = denormalize(y, bundle.vmin, bundle.vmax)[..., :horizon]
    valid = y_mask.astype(bool)[..., :horizon]
    wz = segment_conditions(samples, events, data.network, bundle.calendar,
                            radius_miles)[..., :horizon]
    x_avg = np.stack([bundle.x_avg[:, s.anchor:s.anchor + horizon] for s in samples])

    return SplitEvaluation(
        all=compute_metrics(pred, truth, valid, horizon=horizon, condition="all"),
        normal=compute_metrics(pred, truth, valid & ~wz, horizon=horizon, condition="normal"),
        workzone=compute_metrics(pred, truth, valid & wz, horizon=horizon, condition="workzone"),
        disruption_accuracy=disruption_accuracy(pred, truth, x_avg, valid, wz,
                                                threshold=disruption_threshold),
        split=split,
        horizon=horizon,
    )


# -- ablation -----------------------------------------------------------------


DEFAULT_NEIGHBOR_GRID: tuple = (1, 5, 10, "all")


def _metric_row(report: MetricReport) -> dict:
    return {"mae": report.mae, "rmse": report.rmse, "mape": report.mape,
            "count": report.count, "status": "ok"}


def run_ablation(bundle, network, events, model_config: ModelConfig,
                 train_config: TrainConfig,
                 neighbors=DEFAULT_NEIGHBOR_GRID,
                 formulas=tuple(SPEED_WAVE_FORMULAS),
                 split_ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
                 horizon: int | None = None,
                 neighbor_condition: str = "normal",
                 formula_condition: str = "workzone",
                 eval_split: str = "test") -> dict:
    """Train one model per grid cell (shared seed) and tabulate metrics.

    Returns a machine-readable table with one row per neighbor count
    and one per fusion formula. A failed cell is marked and the run
    continues.
    """
    for formula in formulas:
        if formula not in SPEED_WAVE_FORMULAS:
            raise ConfigError(f"unknown speed-wave formula '{formula}'")

    def run_cell(config: ModelConfig, condition: str) -> dict:
        try:
            data = prepare_datasets(bundle, network, config, split_ratios)
            params, _ = train(data, config, train_config)
            ev = evaluate_split(params, data, config, events,
                                split=eval_split, horizon=horizon)
            report = ev.report_for(condition)
            if report.empty:  # fall back so a quiet corridor still tabulates
                report = ev.all
            return _metric_row(report)
        except Exception as exc:  # keep the grid going
            log.warning("ablation cell failed: %s", exc)
            return {"mae": None, "rmse": None, "mape": None, "count": 0,
                    "status": "failed", "error": str(exc)}

    neighbor_rows = []
    for k in neighbors:
        row = {"k_neighbors": k}
        row.update(run_cell(model_config.with_overrides(k_neighbors=k),
                            neighbor_condition))
        neighbor_rows.append(row)

    formula_rows = []
    for formula in formulas:
        row = {"formula_id": formula, "formula": SPEED_WAVE_FORMULAS[formula]}
        row.update(run_cell(model_config.with_overrides(speed_wave=formula),
                            formula_condition))
        formula_rows.append(row)

    return {
        "horizon": horizon if horizon is not None else model_config.horizon,
        "seed": train_config.seed,
        "neighbors": {"condition": neighbor_condition, "rows": neighbor_rows},
        "speed_wave": {"condition": formula_condition, "rows": formula_rows},
    }
