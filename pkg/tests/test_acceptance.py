"""Acceptance gate: one test per release criterion, at stated tolerances.

Each test prints a single `ACCEPTANCE <name>: PASS|FAIL` line (visible
with `pytest -s` or in captured output). The full-scale corridor
replication is an optional stretch that needs the licensed dataset, so
it is skipped here.
"""

import functools
import math
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from wzcast import autodiff as ad
from wzcast.checkpoint import save_checkpoint
from wzcast.evaluation import evaluate_split, run_ablation
from wzcast.features import build_feature_bundle
from wzcast.hypergraph import Hypergraph, hypergraph_operator
from wzcast.metrics import compute_metrics
from wzcast.model import (SPEED_WAVE_FORMULAS, ModelConfig, forward_batch,
                          init_params)
from wzcast.service import ScenarioEngine, create_app
from wzcast.synthetic import synthetic_corridor
from wzcast.training import TrainConfig, masked_loss, prepare_datasets, train


def criterion(name):
    """Emit one pass/fail line per acceptance criterion."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"\nACCEPTANCE {name}: FAIL")
                raise
            print(f"\nACCEPTANCE {name}: PASS")
            return result

        return run

    return wrap


# -- 1. gradient fidelity ----------------------------------------------------


@criterion("gradient-fidelity")
def test_gradient_fidelity():
    """Reverse-mode gradients of the masked loss match central finite
    differences (h=1e-5) to 1e-4 relative error on an N=4, H=6, P=2
    instance, for every parameter coordinate, within 60 seconds."""
    started = time.perf_counter()
    config = ModelConfig(history=6, horizon=2, channels=4, heads=2, head_dim=3,
                         recurrent_dim=5, time_dim=3, kernel_width=3, k_neighbors=2)
    n, num_slots, h_step = 4, 8, 1e-5
    rng = np.random.default_rng(7)
    params = init_params(config, n, num_slots, seed=1)
    for key in params:  # move every tensor off its (possibly zero) init
        params[key] = params[key] + rng.normal(0.0, 0.3, params[key].shape)

    g_op = hypergraph_operator(Hypergraph(
        incidence=np.array([[1, 1, 0, 0], [1, 1, 1, 0], [0, 1, 1, 1], [0, 0, 1, 1]], dtype=float).T,
        edge_weights=np.ones(4)))
    xs = rng.random((1, n, config.history))
    xc = rng.random((1, n, config.history))
    slots = rng.integers(0, num_slots, size=(1, config.history))
    y = rng.random((1, n, config.horizon))
    y_mask = (rng.random((1, n, config.horizon)) > 0.2).astype(float)

    def loss_of(p) -> float:
        pred = forward_batch(p, xs, xc, slots, g_op, config)
        return masked_loss(pred, y, y_mask, kind="mae")

    leaves = {k: ad.leaf(v, k) for k, v in params.items()}
    grads = ad.backprop(loss_of(leaves), 1.0, leaves=leaves.values())

    checked = 0
    excluded = 0
    for name in params:
        def f(value, name=name):
            trial = dict(params)
            trial[name] = value
            return float(loss_of(trial).data)

        fd = ad.finite_difference_grad(f, params[name], h=h_step)
        got = grads[name]
        # the 1e-6 floor keeps coordinates at the finite-difference noise
        # floor (|grad| ~ h^2) from failing on oracle roundoff
        scale = np.maximum(np.maximum(np.abs(fd), np.abs(got)), 1e-6)
        rel = np.abs(got - fd) / scale
        for idx in np.argwhere(rel > 1e-4):
            # a difference quotient that shifts with h has straddled a
            # ReLU/abs kink; those coordinates are excluded by contract
            coord = tuple(idx)
            flat = params[name].copy()
            estimates = []
            for h_try in (h_step / 8, h_step * 8):
                lo = dict(params)
                hi = dict(params)
                arr_lo, arr_hi = flat.copy(), flat.copy()
                arr_lo[coord] -= h_try
                arr_hi[coord] += h_try
                lo[name], hi[name] = arr_lo, arr_hi
                estimates.append((float(loss_of(hi).data) - float(loss_of(lo).data)) / (2 * h_try))
            spread = max(estimates) - min(estimates)
            denom = max(abs(e) for e in estimates) + 1e-12
            if spread / denom > 1e-3:
                excluded += 1
                continue
            raise AssertionError(
                f"{name}{coord}: reverse {got[coord]:.6e} vs fd {fd[coord]:.6e}")
        checked += rel.size

    elapsed = time.perf_counter() - started
    assert checked > 500
    assert excluded <= checked * 0.01, f"too many kink exclusions: {excluded}"
    assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s (budget 60s)"


# -- 2. hypergraph operator oracle ------------------------------------------


@criterion("hypergraph-operator-oracle")
def test_hypergraph_operator_oracle():
    """Operator equals the explicit dense-factor product to 1e-12 and
    fixes the sqrt-degree vector to 1e-10, over 50 random hypergraphs."""
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 11))
        e = int(rng.integers(1, n + 2))
        while True:
            h = (rng.random((n, e)) < 0.5).astype(float)
            if np.all(h.sum(axis=0) > 0) and np.all(h.sum(axis=1) > 0):
                break
        w = rng.uniform(0.5, 2.0, size=e)
        hg = Hypergraph(incidence=h, edge_weights=w)
        got = hypergraph_operator(hg)

        dv = np.diag((h * w).sum(axis=1))
        de = np.diag(h.sum(axis=0))
        dv_inv_sqrt = np.linalg.inv(np.sqrt(dv))
        want = dv_inv_sqrt @ h @ np.diag(w) @ np.linalg.inv(de) @ h.T @ dv_inv_sqrt
        assert np.max(np.abs(got - want)) <= 1e-12

        u = np.sqrt(hg.vertex_degrees)
        assert np.max(np.abs(got @ u - u)) <= 1e-10


# -- 3. metric oracle ---------------------------------------------------------


@criterion("metric-oracle")
def test_metric_oracle():
    """Metrics agree with an independent streaming implementation to
    1e-10 on 10^4 random cells; the hand example is exact."""
    hand = compute_metrics(np.array([1.0, 2.0]), np.array([1.0, 4.0]), np.ones(2))
    assert hand.mae == 1.0
    assert hand.rmse == math.sqrt(2.0)
    assert hand.mape == 25.0

    rng = np.random.default_rng(13)
    pred = rng.uniform(0.0, 80.0, size=10_000)
    truth = rng.uniform(0.0, 80.0, size=10_000)
    mask = (rng.random(10_000) > 0.25).astype(float)

    count = 0
    abs_sum = 0.0
    sq_sum = 0.0
    mape_sum = 0.0
    mape_n = 0
    for p, t, m in zip(pred, truth, mask):
        if m != 1.0:
            continue
        count += 1
        abs_sum += abs(p - t)
        sq_sum += (p - t) ** 2
        if t >= 1.0:
            mape_sum += abs(p - t) / t * 100.0
            mape_n += 1

    report = compute_metrics(pred, truth, mask)
    assert report.count == count
    assert abs(report.mae - abs_sum / count) <= 1e-10
    assert abs(report.rmse - math.sqrt(sq_sum / count)) <= 1e-10
    assert abs(report.mape - mape_sum / mape_n) <= 1e-10


# -- 4. overfit sanity ---------------------------------------------------------


@criterion("overfit-sanity")
def test_overfit_sanity():
    """Default config drives training MAE below 5% of the speed range
    on a two-week sinusoid corridor within 200 epochs and 5 minutes."""
    started = time.perf_counter()
    network, series, calendar, events = synthetic_corridor(
        n_segments=8, weeks=2, step_minutes=15, seed=0,
        n_events=0, noise_mph=0.5)
    bundle = build_feature_bundle(series, calendar, network.segment_ids,
                                  events, network)
    model_config = ModelConfig()  # defaults throughout
    # loss is normalized by (vmax - vmin), so 0.05 is 5% of the range
    train_config = TrainConfig(stop_at_train_loss=0.05, early_stop_patience=200)
    data = prepare_datasets(bundle, network, model_config)
    _, history = train(data, model_config, train_config)
    elapsed = time.perf_counter() - started

    best = min(r.train_loss for r in history.records)
    assert best < 0.05, f"train MAE stuck at {best:.4f} of range"
    assert len(history.records) <= 200
    assert elapsed < 300.0, f"overfit run took {elapsed:.0f}s (budget 300s)"


# -- 5. work-zone channel value ------------------------------------------------


@criterion("workzone-channel-value")
def test_workzone_channel_value():
    """With work zones causing -20 MPH dips (and equally deep but
    short-lived unscheduled slowdowns making persistence ambiguous),
    the full model beats its own W_c-frozen twin by >= 20% on held-out
    work-zone MAE across 3 seeds, while normal-condition MAE stays
    within 10%. Runtime < 30 minutes."""
    started = time.perf_counter()
    config = ModelConfig(history=12, horizon=3, channels=8, heads=2, head_dim=4,
                         recurrent_dim=8, time_dim=4, k_neighbors=1)
    network, series, calendar, events = synthetic_corridor(
        n_segments=8, weeks=2, step_minutes=15, seed=100,
        n_events=30, event_duration_steps=24, onset_lag_steps=0,
        dip_mph=20.0, neighbor_dip_frac=0.0, noise_mph=0.15,
        daily_amp=0.0, base_low=45.0, base_high=62.0,
        n_phantom_dips=250, phantom_depth_mph=20.0,
        phantom_duration_steps=(2, 3))
    bundle = build_feature_bundle(series, calendar, network.segment_ids,
                                  events, network)
    data = prepare_datasets(bundle, network, config)

    wz = {True: [], False: []}
    normal = {True: [], False: []}
    probe_params = None
    for seed in (0, 1, 2):
        for freeze in (False, True):
            train_config = TrainConfig(
                epochs=150, batch_size=16, learning_rate=3e-3, grad_clip=1.0,
                seed=seed, early_stop_patience=150,
                freeze_params=("fusion.w_constr",) if freeze else ())
            params, _ = train(data, config, train_config)
            if seed == 0 and not freeze:
                probe_params = params
            result = evaluate_split(params, data, config, events, split="test")
            wz[freeze].append(result.workzone.mae)
            normal[freeze].append(result.normal.mae)
            print(f"  seed {seed} freeze={freeze}: wz {result.workzone.mae:.3f} "
                  f"normal {result.normal.mae:.3f}")

    full_wz, frozen_wz = np.mean(wz[False]), np.mean(wz[True])
    full_nm, frozen_nm = np.mean(normal[False]), np.mean(normal[True])
    improvement = 1.0 - full_wz / frozen_wz
    normal_gap = abs(full_nm - frozen_nm) / frozen_nm
    elapsed = time.perf_counter() - started
    print(f"  work-zone MAE {full_wz:.3f} vs frozen {frozen_wz:.3f} "
          f"({improvement:.1%} better); normal gap {normal_gap:.1%}; {elapsed:.0f}s")
    assert improvement >= 0.20, f"work-zone improvement only {improvement:.1%}"
    assert normal_gap < 0.10, f"normal-condition gap {normal_gap:.1%}"
    assert elapsed < 1800.0, f"took {elapsed:.0f}s (budget 1800s)"

    # scenario direction: on this dip-trained model, injecting an event
    # pulls the host segment's forecast downward on average
    from datetime import timedelta

    from wzcast.metrics import workzone_activity
    from wzcast.service import EngineState, EventModel, ScenarioEngine, ScenarioRequestModel

    engine = ScenarioEngine(EngineState(
        params=probe_params, model_config=config, bundle=bundle,
        network=network, events=events, g_op=data.g_op, sigma_miles=1.0,
        checkpoint_id="in-memory"))
    activity = workzone_activity(events, network, calendar)
    deltas = []
    for anchor_idx in range(300, 1000, 50):
        seg_idx = anchor_idx % bundle.n_segments
        if activity[seg_idx, anchor_idx - config.history:anchor_idx].any():
            continue  # keep the baseline window free of real events
        anchor = calendar.time_at(anchor_idx)
        response = engine.predict_scenario(ScenarioRequestModel(
            injected_events=[EventModel(
                segment_id=bundle.segment_ids[seg_idx],
                start=anchor - timedelta(minutes=15 * 10),
                end=anchor + timedelta(minutes=15 * 4))],
            anchor=anchor, horizon=3))
        deltas.append(response["segment_summary"][seg_idx]["mean_delta_mph"])
    assert len(deltas) >= 8
    print(f"  injected-event mean host delta {np.mean(deltas):+.2f} MPH over {len(deltas)} probes")
    assert np.mean(deltas) < 0.0, "injections should read as slowdowns on average"


# -- 6. ablation harness ---------------------------------------------------------


@criterion("ablation-harness")
def test_ablation_harness_shapes():
    """Emits the neighbor table (4 settings x MAE/RMSE/MAPE) and the
    fusion-formula table (4 formulas, fused-with-time included) on the
    synthetic corridor without error."""
    network, series, calendar, events = synthetic_corridor(
        n_segments=12, weeks=1, step_minutes=60, seed=4,
        n_events=10, event_duration_steps=8, onset_lag_steps=0)
    bundle = build_feature_bundle(series, calendar, network.segment_ids,
                                  events, network)
    model_config = ModelConfig(history=6, horizon=3, channels=4, heads=2,
                               head_dim=3, recurrent_dim=5, time_dim=3,
                               k_neighbors=5)
    table = run_ablation(bundle, network, events, model_config,
                         TrainConfig(epochs=1, batch_size=16, seed=0))

    rows = table["neighbors"]["rows"]
    assert [r["k_neighbors"] for r in rows] == [1, 5, 10, "all"]
    for row in rows:
        assert row["status"] == "ok"
        assert all(isinstance(row[k], float) for k in ("mae", "rmse", "mape"))

    formula_rows = table["speed_wave"]["rows"]
    assert len(formula_rows) == 4
    assert {r["formula"] for r in formula_rows} == set(SPEED_WAVE_FORMULAS.values())
    assert SPEED_WAVE_FORMULAS["fused_time"] in {r["formula"] for r in formula_rows}
    assert all(r["status"] == "ok" for r in formula_rows)


# -- 7. determinism ----------------------------------------------------------------


@criterion("determinism")
def test_determinism():
    """Two full train+evaluate runs with one seed/config are bitwise
    identical in every numeric field (wall time excluded)."""
    network, series, calendar, events = synthetic_corridor(
        n_segments=4, weeks=1, step_minutes=60, seed=5,
        n_events=6, event_duration_steps=8)
    bundle = build_feature_bundle(series, calendar, network.segment_ids,
                                  events, network)
    model_config = ModelConfig(history=6, horizon=2, channels=4, heads=2,
                               head_dim=3, recurrent_dim=5, time_dim=3,
                               k_neighbors=2)
    train_config = TrainConfig(epochs=3, batch_size=8, seed=123)

    outputs = []
    for _ in range(2):
        data = prepare_datasets(bundle, network, model_config)
        params, history = train(data, model_config, train_config)
        result = evaluate_split(params, data, model_config, events, split="test")
        outputs.append((params, history, result))

    params_a, hist_a, res_a = outputs[0]
    params_b, hist_b, res_b = outputs[1]
    for key in params_a:
        assert params_a[key].tobytes() == params_b[key].tobytes()
    assert len(hist_a.records) == len(hist_b.records)
    for ra, rb in zip(hist_a.records, hist_b.records):
        assert (ra.epoch, ra.train_loss, ra.val_mae, ra.val_rmse, ra.val_mape) == \
               (rb.epoch, rb.train_loss, rb.val_mae, rb.val_rmse, rb.val_mape)
    assert res_a.to_dict() == res_b.to_dict()


# -- 8. scenario identity --------------------------------------------------------


@criterion("scenario-identity")
def test_scenario_identity(tmp_path):
    """POST /scenario with no injected events returns delta == 0
    exactly, via the real HTTP app (no UI involved)."""
    network, series, calendar, events = synthetic_corridor(
        n_segments=4, weeks=1, step_minutes=60, seed=6,
        n_events=6, event_duration_steps=8, missing_frac=0.02)
    bundle = build_feature_bundle(series, calendar, network.segment_ids,
                                  events, network)
    model_config = ModelConfig(history=6, horizon=3, channels=4, heads=2,
                               head_dim=3, recurrent_dim=5, time_dim=3,
                               k_neighbors=2)
    data = prepare_datasets(bundle, network, model_config)
    params, _ = train(data, model_config, TrainConfig(epochs=2, batch_size=8, seed=0))
    path = tmp_path / "model.npz"
    save_checkpoint(path, params, model_config, {
        "segment_ids": list(bundle.segment_ids),
        "vmin": bundle.vmin, "vmax": bundle.vmax, "sigma_miles": 1.0})
    engine = ScenarioEngine.from_checkpoint(path, bundle, network, events)
    client = TestClient(create_app(engine))

    response = client.post("/scenario", json={
        "injected_events": [],
        "anchor": calendar.time_at(24).isoformat(),
        "horizon": 3,
    })
    assert response.status_code == 200
    body = response.json()
    delta = np.array(body["delta_mph"])
    assert np.array_equal(delta, np.zeros_like(delta))
    assert body["baseline_mph"] == body["scenario_mph"]


# -- optional stretch ---------------------------------------------------------------


@pytest.mark.skip(reason="needs the licensed full-year corridor dataset and "
                         "hours of training; excluded from CI by design")
def test_full_scale_corridor_stretch():
    """With the released full-year corridor data: 6-step normal-condition
    MAE <= 1.6 MPH after full training."""
