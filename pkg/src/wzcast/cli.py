"""Command-line entry points.

Subcommands: ingest, train, evaluate, ablate, forecast, serve.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, NumericError
from .evaluation import evaluate_split, run_ablation
from .features import (FeatureBundle, build_feature_bundle, denormalize,
                       load_bundle, load_speed_csv, load_workzones_csv,
                       normalize, save_bundle)
from .hypergraph import (RoadNetwork, build_hypergraph, hypergraph_operator,
                         load_distance_csv, load_segments_csv)
from .model import predict_batch
from .training import prepare_datasets, train

log = logging.getLogger(__name__)


def _load_network(cfg: PipelineConfig) -> RoadNetwork:
    if cfg.data.distances:
        return load_distance_csv(cfg.data.distances)
    if cfg.data.segments:
        return load_segments_csv(cfg.data.segments)
    raise ConfigError("config needs data.distances or data.segments")


def _load_events(cfg: PipelineConfig):
    return load_workzones_csv(cfg.data.workzones) if cfg.data.workzones else []


def _build_bundle(cfg: PipelineConfig, network: RoadNetwork) -> FeatureBundle:
    if not cfg.data.speeds:
        raise ConfigError("config needs data.speeds")
    series, calendar, segment_ids = load_speed_csv(cfg.data.speeds)
    return build_feature_bundle(series, calendar, segment_ids, _load_events(cfg),
                                network, delta_mph=cfg.data.delta_mph,
                                sigma_miles=cfg.data.sigma_miles,
                                train_frac=cfg.data.split[0])


def _load_corridor(cfg: PipelineConfig, use_cache: bool = True):
    """(bundle, network, events) from the cache when present, else CSVs."""
    network = _load_network(cfg)
    events = _load_events(cfg)
    if use_cache and cfg.data.cache:
        try:
            bundle = load_bundle(cfg.data.cache)
            if bundle.segment_ids != network.segment_ids:
                raise DataError("cached bundle does not match the network; re-run ingest")
            return bundle, network, events
        except FileNotFoundError:
            pass
    return _build_bundle(cfg, network), network, events


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# -- subcommands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = load_config(args.config)
    network = _load_network(cfg)
    bundle = _build_bundle(cfg, network)
    out = args.out or cfg.data.cache
    if out:
        save_bundle(out, bundle)
    observed = float(bundle.mask.mean())
    print(f"ingested {bundle.n_segments} segments x {bundle.n_steps} steps "
          f"({bundle.calendar.step_minutes}-min step), {observed:.1%} observed, "
          f"speed bounds [{bundle.vmin:.1f}, {bundle.vmax:.1f}] MPH"
          + (f", cached to {out}" if out else ""))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    train_cfg = cfg.train if args.seed is None else cfg.train.with_overrides(seed=args.seed)
    bundle, network, events = _load_corridor(cfg)
    data = prepare_datasets(bundle, network, cfg.model, cfg.data.split)
    params, history = train(data, cfg.model, train_cfg)
    meta = {
        "segment_ids": list(bundle.segment_ids),
        "calendar_start": bundle.calendar.start.isoformat(),
        "step_minutes": bundle.calendar.step_minutes,
        "vmin": bundle.vmin,
        "vmax": bundle.vmax,
        "sigma_miles": cfg.data.sigma_miles,
        "delta_mph": cfg.data.delta_mph,
        "seed": train_cfg.seed,
    }
    save_checkpoint(args.out, params, cfg.model, meta)
    history.write_jsonl(args.history_out)
    best = history.records[history.best_epoch]
    print(f"trained {len(history.records)} epochs; best epoch {best.epoch} "
          f"val MAE {best.val_mae:.3f} MPH -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    bundle, network, events = _load_corridor(cfg)
    params, model_cfg, _ = load_checkpoint(args.checkpoint)
    data = prepare_datasets(bundle, network, model_cfg, cfg.data.split)
    result = evaluate_split(params, data, model_cfg, events, split=args.split,
                            horizon=args.horizon,
                            radius_miles=cfg.data.eval_radius_miles)
    payload = result.to_dict()
    payload["condition_requested"] = args.condition
    payload["report"] = result.report_for(args.condition).to_dict()
    _write_json(args.out, payload)
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    bundle, network, events = _load_corridor(cfg)
    grid: dict = {}
    if args.grid:
        import yaml

        with open(args.grid) as fh:
            grid = yaml.safe_load(fh) or {}
        allowed = {"neighbors", "speed_wave", "horizon", "epochs"}
        unknown = set(grid) - allowed
        if unknown:
            raise ConfigError(f"{args.grid}: unknown grid keys {sorted(unknown)}")
    train_cfg = cfg.train
    if args.seed is not None:
        train_cfg = train_cfg.with_overrides(seed=args.seed)
    if grid.get("epochs"):
        train_cfg = train_cfg.with_overrides(epochs=int(grid["epochs"]))
    table = run_ablation(
        bundle, network, events, cfg.model, train_cfg,
        neighbors=tuple(grid.get("neighbors", (1, 5, 10, "all"))),
        formulas=tuple(grid.get("speed_wave", ("fused_time", "fused", "raw_speed", "squared_speed"))),
        split_ratios=cfg.data.split,
        horizon=args.horizon or grid.get("horizon"),
    )
    _write_json(args.out, table)
    return 0


def cmd_forecast(args) -> int:
    cfg = load_config(args.config)
    bundle, network, _ = _load_corridor(cfg)
    params, model_cfg, meta = load_checkpoint(args.checkpoint)
    anchor_time = datetime.fromisoformat(args.anchor)
    anchor = bundle.calendar.index_of(anchor_time)
    if not model_cfg.history <= anchor <= bundle.n_steps:
        raise DataError(f"anchor {args.anchor} needs {model_cfg.history} steps of history "
                        f"inside the data span")
    lo = anchor - model_cfg.history
    x_speed = normalize(bundle.x_speed[:, lo:anchor], bundle.vmin, bundle.vmax)
    x_constr = bundle.x_constr[:, lo:anchor].copy()
    if args.events:
        from .features import Calendar, construction_map

        injected = load_workzones_csv(args.events)
        window_cal = Calendar(start=bundle.calendar.time_at(lo),
                              step_minutes=bundle.calendar.step_minutes,
                              length=model_cfg.history)
        raw = construction_map(injected, network, window_cal, cfg.data.sigma_miles)
        x_constr = np.maximum(x_constr, raw)
    slots = bundle.time_slots[lo:anchor]
    g_op = hypergraph_operator(build_hypergraph(network, model_cfg.k_neighbors))
    pred = predict_batch(params, x_speed[None], x_constr[None], slots[None],
                         g_op, model_cfg)[0]
    mph = np.maximum(denormalize(pred, bundle.vmin, bundle.vmax), 0.0)

    times = [bundle.calendar.time_at(anchor + j).isoformat()
             for j in range(model_cfg.horizon)]
    rows = [["segment_id", *times]]
    rows += [[seg, *(f"{v:.3f}" for v in mph[i])]
             for i, seg in enumerate(bundle.segment_ids)]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ScenarioEngine, create_app

    cfg = load_config(args.config)
    bundle, network, events = _load_corridor(cfg)
    engine = ScenarioEngine.from_checkpoint(args.checkpoint, bundle, network,
                                            events, sigma_miles=cfg.data.sigma_miles)
    app = create_app(engine)
    uvicorn.run(app, host=args.host or cfg.service.host,
                port=args.port or cfg.service.port, log_level="info")
    return 0


# -- argument wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wzcast",
                                     description="Work-zone-aware corridor speed forecasting")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="pipeline YAML config")
        return p

    p = with_config(sub.add_parser("ingest", help="validate inputs and cache feature maps"))
    p.add_argument("--out", help="bundle cache path (defaults to data.cache)")
    p.set_defaults(func=cmd_ingest)

    p = with_config(sub.add_parser("train", help="train a model and write a checkpoint"))
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--out", default="model.npz", help="checkpoint path")
    p.add_argument("--history-out", default="history.jsonl", help="per-epoch JSONL log")
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("evaluate", help="score a checkpoint on a split"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--condition", choices=("normal", "workzone", "all"), default="all")
    p.add_argument("--horizon", type=int, choices=(3, 6, 12), default=None,
                   help="score only the first N forecast steps")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = with_config(sub.add_parser("ablate", help="neighbor / fusion-formula ablation table"))
    p.add_argument("--grid", help="YAML grid file (neighbors, speed_wave, horizon, epochs)")
    p.add_argument("--seed", type=int, help="shared seed override")
    p.add_argument("--horizon", type=int, choices=(3, 6, 12), default=None)
    p.add_argument("--out", help="write the JSON table here instead of stdout")
    p.set_defaults(func=cmd_ablate)

    p = with_config(sub.add_parser("forecast", help="forecast from an anchor time"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--anchor", required=True, help="ISO-8601 anchor time")
    p.add_argument("--events", help="CSV of injected events (segment_id,start,end)")
    p.add_argument("--out", help="write the N x P CSV here instead of stdout")
    p.set_defaults(func=cmd_forecast)

    p = with_config(sub.add_parser("serve", help="start the scenario service"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
