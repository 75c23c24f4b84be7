import numpy as np
import pytest

from wzcast.features import build_feature_bundle
from wzcast.hypergraph import RoadNetwork
from wzcast.model import ModelConfig
from wzcast.synthetic import synthetic_corridor
from wzcast.training import TrainConfig, prepare_datasets


@pytest.fixture(scope="session")
def tiny_model_config():
    return ModelConfig(history=6, horizon=2, channels=4, heads=2, head_dim=3,
                       recurrent_dim=5, time_dim=3, kernel_width=3, k_neighbors=2)


@pytest.fixture(scope="session")
def line_network():
    n = 4
    dist = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]) * 1.0
    return RoadNetwork(segment_ids=tuple(f"s{i}" for i in range(n)), distance=dist)


@pytest.fixture(scope="session")
def small_corridor():
    """1 simulated week, hourly step: small enough for fast training tests."""
    network, series, calendar, events = synthetic_corridor(
        n_segments=4, weeks=1, step_minutes=60, seed=3,
        n_events=6, event_duration_steps=8, onset_lag_steps=2,
        noise_mph=0.4, missing_frac=0.02)
    bundle = build_feature_bundle(series, calendar, network.segment_ids,
                                  events, network)
    return bundle, network, events


@pytest.fixture(scope="session")
def small_datasets(small_corridor, tiny_model_config):
    bundle, network, _ = small_corridor
    return prepare_datasets(bundle, network, tiny_model_config)


@pytest.fixture(scope="session")
def quick_train_config():
    return TrainConfig(epochs=3, batch_size=8, learning_rate=3e-3,
                       seed=0, early_stop_patience=5)
