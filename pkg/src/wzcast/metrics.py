"""Forecast error metrics and the normal / work-zone cell partition.

All metrics run on denormalized speeds (MPH) and only over observed
cells. MAPE skips truth values below 1 MPH to avoid division blowups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .features import Calendar
from .hypergraph import RoadNetwork

MAPE_GUARD_MPH = 1.0


@dataclass(frozen=True)
class MetricReport:
    """MAE/RMSE in MPH, MAPE in percent; `count` is the cell count.

    An empty selection produces the empty-report marker (count 0, all
    metrics None) rather than zeros.
    """

    mae: float | None
    rmse: float | None
    mape: float | None
    count: int
    horizon: int | None = None
    condition: str = "all"

    def __post_init__(self):
        if self.count > 0:
            if self.mae is None or self.rmse is None:
                raise DataError("non-empty report must carry MAE and RMSE")
            # power-mean inequality, with float-rounding slack
            if self.rmse < self.mae - 1e-9:
                raise DataError(f"RMSE {self.rmse} < MAE {self.mae}")

    @property
    def empty(self) -> bool:
        return self.count == 0

    def to_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "mape": self.mape,
                "count": self.count, "horizon": self.horizon,
                "condition": self.condition}


def compute_metrics(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray,
                    horizon: int | None = None, condition: str = "all") -> MetricReport:
    """MAE, RMSE, and MAPE over cells where mask is 1."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    sel = np.asarray(mask).astype(bool)
    if pred.shape != truth.shape or pred.shape != sel.shape:
        raise DataError(f"metric inputs must share a shape: {pred.shape}, "
                        f"{truth.shape}, {sel.shape}")
    count = int(sel.sum())
    if count == 0:
        return MetricReport(mae=None, rmse=None, mape=None, count=0,
                            horizon=horizon, condition=condition)
    err = pred[sel] - truth[sel]
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    t = truth[sel]
    guard = t >= MAPE_GUARD_MPH
    mape = float(np.mean(np.abs(err[guard]) / t[guard]) * 100.0) if guard.any() else None
    return MetricReport(mae=mae, rmse=rmse, mape=mape, count=count,
                        horizon=horizon, condition=condition)


def workzone_activity(events, network: RoadNetwork, calendar: Calendar,
                      radius_miles: float = 0.0) -> np.ndarray:
    """Boolean (N, T) map: True where a work zone is active.

    With the default radius of 0 only the hosting segment is flagged;
    a positive radius also flags segments within that road distance.
    """
    active = np.zeros((network.n_segments, calendar.length), dtype=bool)
    for event in events:
        i = network.index_of(event.segment_id)
        lo, hi = event.active_range(calendar)
        if lo >= hi:
            continue
        if radius_miles > 0:
            touched = network.distance[:, i] <= radius_miles
        else:
            touched = np.zeros(network.n_segments, dtype=bool)
            touched[i] = True
        active[touched, lo:hi] = True
    return active


def segment_conditions(samples, events, network: RoadNetwork, calendar: Calendar,
                       radius_miles: float = 0.0) -> np.ndarray:
    """Per-sample (S, N, P) work-zone flags for every target cell.

    The partition is exhaustive and disjoint: a cell is either workzone
    (flag True) or normal. Evaluation-only; training uses all samples.
    """
    activity = workzone_activity(events, network, calendar, radius_miles)
    if not samples:
        return np.zeros((0, network.n_segments, 0), dtype=bool)
    horizon = samples[0].y.shape[1]
    out = np.zeros((len(samples), network.n_segments, horizon), dtype=bool)
    for s, sample in enumerate(samples):
        out[s] = activity[:, sample.anchor:sample.anchor + horizon]
    return out


def disruption_accuracy(pred: np.ndarray, truth: np.ndarray, x_avg: np.ndarray,
                        valid_mask: np.ndarray, workzone_mask: np.ndarray,
                        threshold: float = 5.0) -> list[float | None]:
    """Fraction of notably disrupted cells predicted within `threshold` MPH.

    A cell qualifies when it is observed, lies in the work-zone
    condition, and its truth deviates from the historical average by
    more than `threshold`. Returned per forecast step; None marks an
    empty selection at that step.
    """
    if threshold <= 0:
        raise ConfigError("threshold must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    x_avg = np.asarray(x_avg, dtype=np.float64)
    base = (np.asarray(valid_mask).astype(bool)
            & np.asarray(workzone_mask).astype(bool)
            & (np.abs(truth - x_avg) > threshold))
    fractions: list[float | None] = []
    for step in range(pred.shape[-1]):
        sel = base[..., step]
        if not sel.any():
            fractions.append(None)
            continue
        hits = np.abs(pred[..., step][sel] - truth[..., step][sel]) <= threshold
        fractions.append(float(hits.mean()))
    return fractions
