"""What-if scenario service.

A long-running HTTP + JSON API over a trained checkpoint: clients
inject hypothetical work zones, pick an anchor time and horizon, and
get baseline vs. scenario forecasts back. Injected events bypass the
observed-slowdown gate (a hypothetical event has no observed diff), so
they contribute their raw kernel value to the work-zone map.

Endpoints: GET /network, GET /history, POST /scenario, GET /health.
Every response carries ``X-API-Version: 1``; errors are
``{"code", "message"}`` JSON bodies.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .checkpoint import checkpoint_digest, load_checkpoint
from .errors import DataError, WzcastError
from .features import (Calendar, FeatureBundle, WorkZoneEvent, construction_map,
                       denormalize, normalize)
from .hypergraph import RoadNetwork, build_hypergraph, hypergraph_operator
from .model import ModelConfig, predict_batch

API_VERSION = "1"


class AnchorOutOfRange(WzcastError):
    """Requested anchor lies outside the served data span."""


class EventModel(BaseModel):
    segment_id: str
    start: datetime
    end: datetime


class ScenarioRequestModel(BaseModel):
    injected_events: list[EventModel] = Field(default_factory=list)
    anchor: datetime
    horizon: int = Field(ge=1)


@dataclass(frozen=True)
class EngineState:
    """Everything needed to serve one checkpoint; swapped atomically."""

    params: dict[str, np.ndarray]
    model_config: ModelConfig
    bundle: FeatureBundle
    network: RoadNetwork
    events: list[WorkZoneEvent]
    g_op: np.ndarray
    sigma_miles: float
    checkpoint_id: str


class ScenarioEngine:
    """Thread-safe inference wrapper; reload swaps state atomically."""

    def __init__(self, state: EngineState):
        self._state = state
        self._reload_lock = threading.Lock()

    @classmethod
    def from_checkpoint(cls, checkpoint_path, bundle: FeatureBundle,
                        network: RoadNetwork, events, sigma_miles: float = 1.0):
        params, model_config, meta = load_checkpoint(checkpoint_path)
        if tuple(meta.get("segment_ids", bundle.segment_ids)) != bundle.segment_ids:
            raise DataError("checkpoint was trained on different segments")
        g_op = hypergraph_operator(build_hypergraph(network, model_config.k_neighbors))
        state = EngineState(params=params, model_config=model_config,
                            bundle=bundle, network=network, events=list(events),
                            g_op=g_op, sigma_miles=float(meta.get("sigma_miles", sigma_miles)),
                            checkpoint_id=checkpoint_digest(checkpoint_path))
        return cls(state)

    @property
    def state(self) -> EngineState:
        return self._state

    def reload(self, state: EngineState) -> None:
        with self._reload_lock:
            self._state = state  # single reference swap: readers never see a mix

    # -- endpoint bodies ----------------------------------------------------

    def network_snapshot(self) -> dict:
        st = self._state
        bundle, cal = st.bundle, st.bundle.calendar
        last = cal.length - 1
        recent = []
        for i, seg in enumerate(bundle.segment_ids):
            observed = np.flatnonzero(bundle.mask[i])
            if observed.size:
                t = int(observed[-1])
                recent.append({"segment_id": seg,
                               "speed_mph": float(bundle.x_speed[i, t]),
                               "time": cal.time_at(t).isoformat()})
            else:
                recent.append({"segment_id": seg, "speed_mph": None, "time": None})
        end_time = cal.time_at(last)
        as_dict = lambda e: {"segment_id": e.segment_id,
                             "start": e.start.isoformat(),
                             "end": e.end.isoformat()}
        return {
            "segments": list(bundle.segment_ids),
            "distances_miles": st.network.distance.tolist(),
            "calendar": {"start": cal.start.isoformat(),
                         "step_minutes": cal.step_minutes,
                         "length": cal.length,
                         "end": end_time.isoformat()},
            "history_steps": st.model_config.history,
            "horizon_steps": st.model_config.horizon,
            "recent_speeds": recent,
            "events": [as_dict(e) for e in st.events],
            "active_events": [as_dict(e) for e in st.events
                              if e.start <= end_time < e.end],
        }

    def history(self, segment: str, t_from: datetime | None,
                t_to: datetime | None) -> dict:
        st = self._state
        bundle, cal = st.bundle, st.bundle.calendar
        i = st.network.index_of(segment)
        lo = 0 if t_from is None else max(0, self._grid_floor(cal, t_from))
        hi = cal.length if t_to is None else min(cal.length, self._grid_floor(cal, t_to) + 1)
        if lo >= hi:
            return {"segment_id": segment, "times": [], "speed_mph": [],
                    "average_mph": []}
        times = [cal.time_at(t).isoformat() for t in range(lo, hi)]
        speeds = [float(bundle.x_speed[i, t]) if bundle.mask[i, t] == 1.0 else None
                  for t in range(lo, hi)]
        return {"segment_id": segment, "times": times, "speed_mph": speeds,
                "average_mph": [float(v) for v in bundle.x_avg[i, lo:hi]]}

    @staticmethod
    def _grid_floor(cal: Calendar, when: datetime) -> int:
        minutes = (when - cal.start).total_seconds() / 60.0
        return int(np.floor(minutes / cal.step_minutes))

    def predict_scenario(self, request: ScenarioRequestModel) -> dict:
        st = self._state
        bundle, cal, cfg = st.bundle, st.bundle.calendar, st.model_config
        try:
            anchor = cal.index_of(request.anchor)
        except DataError as exc:
            raise AnchorOutOfRange(str(exc)) from None
        if not cfg.history <= anchor <= cal.length:
            raise AnchorOutOfRange(
                f"anchor {request.anchor.isoformat()} needs {cfg.history} history steps "
                f"inside the data span")
        if request.horizon > cfg.horizon:
            raise DataError(f"horizon {request.horizon} exceeds the model's {cfg.horizon}")

        injected = [WorkZoneEvent(segment_id=e.segment_id, start=e.start, end=e.end)
                    for e in request.injected_events]
        for event in injected:
            st.network.index_of(event.segment_id)  # raises DataError if unknown

        lo = anchor - cfg.history
        window_cal = Calendar(start=cal.time_at(lo), step_minutes=cal.step_minutes,
                              length=cfg.history)
        x_speed = normalize(bundle.x_speed[:, lo:anchor], bundle.vmin, bundle.vmax)
        slots = bundle.time_slots[lo:anchor]
        xc_base = bundle.x_constr[:, lo:anchor]
        # hypothetical events carry no observed diff: no gating on injections
        xc_injected = construction_map(injected, st.network, window_cal, st.sigma_miles)
        xc_scenario = np.maximum(xc_base, xc_injected)

        def run(xc: np.ndarray) -> np.ndarray:
            pred = predict_batch(st.params, x_speed[None], xc[None], slots[None],
                                 st.g_op, cfg)[0]
            mph = denormalize(pred, bundle.vmin, bundle.vmax)
            return np.maximum(mph, 0.0)[:, :request.horizon]  # clamp at the API boundary

        baseline = run(xc_base)
        scenario = run(xc_scenario)
        if not injected and not np.array_equal(baseline, scenario):
            raise AssertionError("empty scenario must reproduce the baseline exactly")
        delta = scenario - baseline

        summary = [{"segment_id": seg,
                    "mean_delta_mph": float(delta[i].mean()),
                    "max_slowdown_mph": float(max(0.0, -delta[i].min()))}
                   for i, seg in enumerate(bundle.segment_ids)]
        return {
            "anchor": request.anchor.isoformat(),
            "horizon": request.horizon,
            "times": [cal.time_at(anchor + j).isoformat() for j in range(request.horizon)],
            "segments": list(bundle.segment_ids),
            "baseline_mph": baseline.tolist(),
            "scenario_mph": scenario.tolist(),
            "delta_mph": delta.tolist(),
            "segment_summary": summary,
            "checkpoint_id": st.checkpoint_id,
            "note": "scenario values are model-based extrapolation for hypothetical events",
        }


def create_app(engine: ScenarioEngine) -> FastAPI:
    app = FastAPI(title="wzcast scenario service", version=API_VERSION)

    @app.middleware("http")
    async def stamp_version(request: Request, call_next):
        response = await call_next(request)
        response.headers["X-API-Version"] = API_VERSION
        return response

    def error_body(code: str, message: str, status: int) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content={"code": code, "message": message},
                            headers={"X-API-Version": API_VERSION})

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        return error_body(f"http_{exc.status_code}", str(exc.detail), exc.status_code)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return error_body("validation_error", str(exc.errors()), 422)

    @app.exception_handler(AnchorOutOfRange)
    async def anchor_error(request: Request, exc: AnchorOutOfRange):
        return error_body("anchor_out_of_range", str(exc), 404)

    @app.exception_handler(DataError)
    async def data_error(request: Request, exc: DataError):
        return error_body("bad_request", str(exc), 422)

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint_id": engine.state.checkpoint_id}

    @app.get("/network")
    def network():
        return engine.network_snapshot()

    @app.get("/history")
    def history(segment: str = Query(...),
                time_from: datetime | None = Query(None, alias="from"),
                time_to: datetime | None = Query(None, alias="to")):
        return engine.history(segment, time_from, time_to)

    @app.post("/scenario")
    def scenario(request: ScenarioRequestModel):
        return engine.predict_scenario(request)

    return app
