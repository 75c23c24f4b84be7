"""Scikit-learn-style facade over the full pipeline.

``CorridorForecaster`` exposes fit / predict / get_params so the model
clones, grid-searches, and composes like any other estimator. The
training input is a corridor, not a flat design matrix: ``fit`` accepts
either a ``(FeatureBundle, RoadNetwork, events)`` triple or a prepared
:class:`~wzcast.training.Datasets`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, DataError
from .evaluation import SplitEvaluation, evaluate_split, predict_samples
from .features import FeatureBundle, denormalize
from .model import ModelConfig
from .training import Datasets, TrainConfig, prepare_datasets, train


class CorridorForecaster(BaseEstimator):
    """Speed forecaster with a work-zone input channel.

    Parameters mirror :class:`ModelConfig` and :class:`TrainConfig`;
    see those for semantics. Fitted state lives in trailing-underscore
    attributes (``params_``, ``history_``, ``data_``).
    """

    def __init__(self, history=12, horizon=12, blocks=2, heads=4, head_dim=8,
                 channels=32, kernel_width=3, recurrent_dim=32, time_dim=4,
                 k_neighbors=5, speed_wave="fused_time",
                 epochs=200, batch_size=16, learning_rate=1e-3, grad_clip=5.0,
                 seed=0, early_stop_patience=20, loss="mae",
                 split=(0.7, 0.1, 0.2)):
        self.history = history
        self.horizon = horizon
        self.blocks = blocks
        self.heads = heads
        self.head_dim = head_dim
        self.channels = channels
        self.kernel_width = kernel_width
        self.recurrent_dim = recurrent_dim
        self.time_dim = time_dim
        self.k_neighbors = k_neighbors
        self.speed_wave = speed_wave
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.grad_clip = grad_clip
        self.seed = seed
        self.early_stop_patience = early_stop_patience
        self.loss = loss
        self.split = split

    def _model_config(self) -> ModelConfig:
        return ModelConfig(history=self.history, horizon=self.horizon,
                           blocks=self.blocks, heads=self.heads,
                           head_dim=self.head_dim, channels=self.channels,
                           kernel_width=self.kernel_width,
                           recurrent_dim=self.recurrent_dim,
                           time_dim=self.time_dim, k_neighbors=self.k_neighbors,
                           speed_wave=self.speed_wave)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate,
                           grad_clip=self.grad_clip, seed=self.seed,
                           early_stop_patience=self.early_stop_patience,
                           loss=self.loss)

    def fit(self, X, y=None):
        """Train on a corridor.

        `X` is a (bundle, network, events) triple or a Datasets; `y` is
        ignored (targets come from the bundle's own future windows).
        """
        if isinstance(X, Datasets):
            if X.splits.train and X.splits.train[0].x_speed.shape[1] != self.history:
                raise ConfigError("prepared Datasets were windowed with a different history")
            data = X
            self.events_ = []
        else:
            try:
                bundle, network, events = X
            except (TypeError, ValueError):
                raise ConfigError("fit expects (bundle, network, events) or a Datasets") from None
            if not isinstance(bundle, FeatureBundle):
                raise ConfigError("first element must be a FeatureBundle")
            data = prepare_datasets(bundle, network, self._model_config(),
                                    tuple(self.split))
            self.events_ = list(events)
        self.model_config_ = self._model_config()
        self.params_, self.history_ = train(data, self.model_config_, self._train_config())
        self.data_ = data
        self.n_segments_ = data.bundle.n_segments
        return self

    def predict(self, X) -> np.ndarray:
        """Forecast speeds (MPH) for samples or anchor indices.

        `X` may be a sequence of ForecastSample or of integer anchors
        into the fitted bundle (anchors only need history, not targets,
        so forecasting just past the data end works). Returns
        (len(X), N, P).
        """
        check_is_fitted(self, "params_")
        samples = list(X)
        bundle = self.data_.bundle
        if samples and isinstance(samples[0], (int, np.integer)):
            from .features import ForecastSample, normalize

            speeds = normalize(bundle.x_speed, bundle.vmin, bundle.vmax)
            built = []
            for raw in samples:
                anchor = int(raw)
                if not self.history <= anchor <= bundle.n_steps:
                    raise DataError(f"anchor {anchor} needs {self.history} history "
                                    f"steps within the data span")
                built.append(ForecastSample(
                    anchor=anchor,
                    x_speed=speeds[:, anchor - self.history:anchor],
                    x_constr=bundle.x_constr[:, anchor - self.history:anchor],
                    slots=bundle.time_slots[anchor - self.history:anchor],
                    y=np.zeros((bundle.n_segments, self.horizon)),
                    y_mask=np.ones((bundle.n_segments, self.horizon)),
                ))
            samples = built
        pred = predict_samples(self.params_, samples, self.data_, self.model_config_)
        return denormalize(pred, bundle.vmin, bundle.vmax)

    def evaluate(self, split: str = "test", horizon: int | None = None,
                 radius_miles: float = 0.0) -> SplitEvaluation:
        """Condition-partitioned test metrics for the fitted corridor."""
        check_is_fitted(self, "params_")
        return evaluate_split(self.params_, self.data_, self.model_config_,
                              self.events_, split=split, horizon=horizon,
                              radius_miles=radius_miles)

    def score(self, X=None, y=None) -> float:
        """Negative validation MAE (higher is better), sklearn-style."""
        check_is_fitted(self, "params_")
        best = min(r.val_mae for r in self.history_.records)
        return -best
