"""Optimization of the forecasting model on windowed samples.

The loss is mean absolute error over observed target cells (mean
squared error behind a switch), in normalized units; imputed cells
never contribute. Training is a pure function of (data, configs): the
seed fixes initialization and batch order, so reruns are bitwise
reproducible.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ConfigError, DataError, NumericError
from .features import FeatureBundle, SplitSamples, denormalize, stack_samples, windowize
from .hypergraph import RoadNetwork, build_hypergraph, hypergraph_operator
from .metrics import compute_metrics
from .model import ModelConfig, forward_batch, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings."""

    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    early_stop_patience: int = 20
    loss: str = "mae"
    freeze_params: tuple[str, ...] = ()
    stop_at_train_loss: float | None = None

    def __post_init__(self):
        for name in ("epochs", "batch_size", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("learning_rate", "beta1", "beta2", "eps", "grad_clip"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.loss not in ("mae", "mse"):
            raise ConfigError(f"loss must be 'mae' or 'mse', got '{self.loss}'")

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float
    val_mape: float | None
    seconds: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_mae": self.val_mae, "val_rmse": self.val_rmse,
                "val_mape": self.val_mape, "seconds": self.seconds}


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r.to_dict()) for r in self.records)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl() + "\n")


@dataclass(frozen=True)
class Datasets:
    """Everything the trainer and evaluator need for one corridor."""

    bundle: FeatureBundle
    network: RoadNetwork
    splits: SplitSamples
    g_op: np.ndarray


def prepare_datasets(bundle: FeatureBundle, network: RoadNetwork,
                     model_config: ModelConfig,
                     split: tuple[float, float, float] = (0.7, 0.1, 0.2)) -> Datasets:
    """Windowize the bundle and precompute the hypergraph operator."""
    hg = build_hypergraph(network, model_config.k_neighbors)
    g_op = hypergraph_operator(hg)
    splits = windowize(bundle, model_config.history, model_config.horizon, split)
    return Datasets(bundle=bundle, network=network, splits=splits, g_op=g_op)


# -- loss and optimizer -------------------------------------------------------


def masked_loss(pred: "Var | np.ndarray", target: np.ndarray, mask: np.ndarray,
                kind: str = "mae") -> Var:
    """Mean absolute (or squared) error over cells where mask is 1."""
    total_weight = float(np.asarray(mask).sum())
    if total_weight <= 0:
        raise DataError("masked_loss needs at least one observed cell")
    pred = pred if isinstance(pred, Var) else ad.constant(pred)
    diff = ad.mul(ad.add(pred, ad.mul(ad.constant(target), -1.0)), ad.constant(mask))
    if kind == "mae":
        total = ad.reduce_sum(ad.absolute(diff))
    elif kind == "mse":
        total = ad.reduce_sum(ad.mul(diff, diff))
    else:
        raise ConfigError(f"loss must be 'mae' or 'mse', got '{kind}'")
    return total / total_weight


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam(params: Mapping[str, np.ndarray]) -> AdamState:
    return AdamState(m={k: np.zeros_like(p) for k, p in params.items()},
                     v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, config: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """First/second-moment update with bias correction and global-norm
    clipping. Aborts (no mutation) on non-finite gradients."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for '{name}'")

    sq = sum(float(np.sum(g * g)) for g in grads.values())
    norm = np.sqrt(sq)
    scale = config.grad_clip / norm if (config.grad_clip > 0 and norm > config.grad_clip) else 1.0

    state.t += 1
    bc1 = 1.0 - config.beta1 ** state.t
    bc2 = 1.0 - config.beta2 ** state.t
    for name, g in grads.items():
        g = g * scale
        state.m[name] = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1.0 - config.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] = params[name] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


# -- training loop --------------------------------------------------------------


def _evaluate_split(params, samples, data: Datasets, model_config: ModelConfig,
                    chunk: int = 64):
    """Denormalized MAE/RMSE/MAPE over a sample list."""
    bundle = data.bundle
    preds, truths, masks = [], [], []
    for lo in range(0, len(samples), chunk):
        part = samples[lo:lo + chunk]
        xs, xc, slots, y, y_mask = stack_samples(part)
        pred = forward_batch(params, xs, xc, slots, data.g_op, model_config).data
        preds.append(pred)
        truths.append(y)
        masks.append(y_mask)
    pred = denormalize(np.concatenate(preds), bundle.vmin, bundle.vmax)
    truth = denormalize(np.concatenate(truths), bundle.vmin, bundle.vmax)
    return compute_metrics(pred, truth, np.concatenate(masks))


def train(data: Datasets, model_config: ModelConfig,
          train_config: TrainConfig) -> tuple[dict[str, np.ndarray], TrainHistory]:
    """Run the optimization loop and return the best-validation params.

    "Best" means lowest validation MAE; early stopping kicks in after
    `early_stop_patience` epochs without improvement.
    """
    if not data.splits.train or not data.splits.val:
        raise DataError("training requires non-empty train and validation splits")

    bundle = data.bundle
    params = init_params(model_config, bundle.n_segments,
                         bundle.calendar.num_weekly_slots, seed=train_config.seed)
    adam = init_adam(params)
    rng = np.random.default_rng(train_config.seed)
    train_samples = list(data.splits.train)
    frozen = set(train_config.freeze_params)
    unknown = frozen - params.keys()
    if unknown:
        raise ConfigError(f"freeze_params names unknown parameters: {sorted(unknown)}")

    history = TrainHistory()
    best_mae = np.inf
    best_params = {k: p.copy() for k, p in params.items()}
    stale = 0

    for epoch in range(train_config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(train_samples))
        epoch_loss = 0.0
        cells = 0.0
        for batch_no, lo in enumerate(range(0, len(order), train_config.batch_size)):
            batch = [train_samples[i] for i in order[lo:lo + train_config.batch_size]]
            xs, xc, slots, y, y_mask = stack_samples(batch)
            leaves = {k: ad.leaf(p, k) for k, p in params.items()}
            try:
                pred = forward_batch(leaves, xs, xc, slots, data.g_op, model_config)
                loss = masked_loss(pred, y, y_mask, kind=train_config.loss)
                grads = ad.backprop(loss, 1.0, leaves=leaves.values())
            except NumericError as exc:
                raise NumericError(f"epoch {epoch} batch {batch_no}: {exc}") from exc
            for name in frozen:
                grads[name] = np.zeros_like(grads[name])
            params, adam = adam_step(params, grads, adam, train_config)
            weight = float(y_mask.sum())
            epoch_loss += float(loss.data) * weight
            cells += weight
        train_loss = epoch_loss / cells

        report = _evaluate_split(params, data.splits.val, data, model_config)
        record = EpochRecord(epoch=epoch, train_loss=train_loss,
                             val_mae=report.mae, val_rmse=report.rmse,
                             val_mape=report.mape,
                             seconds=time.perf_counter() - started)
        history.records.append(record)
        log.info("epoch %d: train %s=%.5f val MAE=%.3f MPH", epoch,
                 train_config.loss, train_loss, report.mae)

        if report.mae < best_mae:
            best_mae = report.mae
            best_params = {k: p.copy() for k, p in params.items()}
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= train_config.early_stop_patience:
                log.info("early stop at epoch %d (no improvement for %d epochs)",
                         epoch, stale)
                break
        if (train_config.stop_at_train_loss is not None
                and train_loss <= train_config.stop_at_train_loss):
            log.info("target train loss reached at epoch %d", epoch)
            break

    return best_params, history
