"""Record service responses as UI fixtures.

Trains a small model on a deterministic synthetic corridor, stands up
the scenario service in-process, and snapshots the JSON bodies the UI
consumes. Rerun after wire-format changes:

    python3 frontend/scripts/record_fixtures.py
"""

import json
import pathlib
import sys

from fastapi.testclient import TestClient

from wzcast.checkpoint import save_checkpoint
from wzcast.features import build_feature_bundle
from wzcast.model import ModelConfig
from wzcast.service import ScenarioEngine, create_app
from wzcast.synthetic import synthetic_corridor
from wzcast.training import TrainConfig, prepare_datasets, train

FIXTURE_DIR = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def main() -> int:
    network, series, calendar, events = synthetic_corridor(
        n_segments=4, weeks=1, step_minutes=60, seed=3,
        n_events=6, event_duration_steps=8, onset_lag_steps=2,
        noise_mph=0.4, missing_frac=0.02, spacing_miles=2.0)
    bundle = build_feature_bundle(series, calendar, network.segment_ids, events, network)
    config = ModelConfig(history=6, horizon=12, channels=4, heads=2, head_dim=3,
                         recurrent_dim=5, time_dim=3, k_neighbors=2)
    data = prepare_datasets(bundle, network, config)
    params, _ = train(data, config, TrainConfig(epochs=3, batch_size=8, seed=0))
    params["fusion.w_constr"] = params["fusion.w_constr"] - 1.0  # make injections read as slowdowns

    FIXTURE_DIR.mkdir(exist_ok=True)
    ckpt = FIXTURE_DIR / "_model.npz"
    save_checkpoint(ckpt, params, config, {
        "segment_ids": list(bundle.segment_ids),
        "vmin": bundle.vmin, "vmax": bundle.vmax, "sigma_miles": 1.0,
    })
    engine = ScenarioEngine.from_checkpoint(ckpt, bundle, network, events)
    client = TestClient(create_app(engine))
    ckpt.unlink()

    anchor = calendar.time_at(120)
    segment = bundle.segment_ids[1]
    recordings = {
        "network": client.get("/network"),
        "history": client.get("/history", params={"segment": segment}),
        "scenario_empty": client.post("/scenario", json={
            "injected_events": [], "anchor": anchor.isoformat(), "horizon": 12}),
        "scenario_one_event": client.post("/scenario", json={
            "injected_events": [{
                "segment_id": segment,
                "start": calendar.time_at(114).isoformat(),
                "end": calendar.time_at(126).isoformat(),
            }],
            "anchor": anchor.isoformat(), "horizon": 12}),
    }
    for name, response in recordings.items():
        response.raise_for_status()
        path = FIXTURE_DIR / f"{name}.json"
        path.write_text(json.dumps(response.json(), indent=2) + "\n")
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
