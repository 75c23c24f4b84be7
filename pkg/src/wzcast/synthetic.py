"""Synthetic corridor generator for tests and desk-scale experiments.

Produces a linear corridor with a daily sinusoidal speed profile,
Gaussian noise, a sprinkle of missing observations, and scheduled work
zones. Each work zone depresses speed on its own segment (and, damped,
on immediate neighbors) starting `onset_lag_steps` after the event
opens, mimicking crews setting up before the lane closure bites. The
lag is what makes the work-zone channel genuinely informative: at
onset the speed history alone cannot foresee the dip.
"""

from __future__ import annotations

import csv
from datetime import datetime

import numpy as np

from .errors import ConfigError
from .features import Calendar, SpeedSeries, WorkZoneEvent
from .hypergraph import RoadNetwork

#: A Monday, so weekly slots start at zero.
DEFAULT_START = datetime(2019, 1, 7, 0, 0)


def synthetic_corridor(n_segments: int = 8, weeks: int = 2, step_minutes: int = 15,
                       seed: int = 0, *,
                       n_events: int = 24, event_duration_steps: int = 24,
                       onset_lag_steps: int = 4, dip_mph: float = 20.0,
                       neighbor_dip_frac: float = 0.3, noise_mph: float = 0.5,
                       missing_frac: float = 0.01, spacing_miles: float = 0.8,
                       base_low: float = 45.0, base_high: float = 62.0,
                       daily_amp: float = 8.0, n_phantom_dips: int = 0,
                       phantom_depth_mph: float = 20.0,
                       phantom_duration_steps: tuple[int, int] = (2, 4),
                       start: datetime = DEFAULT_START,
                       ) -> tuple[RoadNetwork, SpeedSeries, Calendar, list[WorkZoneEvent]]:
    """Generate (network, series, calendar, events) for one corridor.

    Phantom dips are slowdowns of work-zone depth but short duration
    that appear on no schedule: with them in the mix, whether a fresh
    dip will persist is unknowable from the speed history alone, which
    is exactly the ambiguity the work-zone channel resolves.
    """
    if n_segments < 1 or weeks < 1:
        raise ConfigError("need at least one segment and one week")
    rng = np.random.default_rng(seed)
    length = weeks * 7 * (1440 // step_minutes)
    calendar = Calendar(start=start, step_minutes=step_minutes, length=length)

    ids = tuple(f"seg{100 + i}" for i in range(n_segments))
    positions = np.arange(n_segments) * spacing_miles
    distance = np.abs(positions[:, None] - positions[None, :])
    network = RoadNetwork(segment_ids=ids, distance=distance)

    base = rng.uniform(base_low, base_high, size=n_segments)
    phase = rng.uniform(-0.3, 0.3, size=n_segments)
    minutes = (np.arange(length) * step_minutes) % 1440
    day_angle = 2.0 * np.pi * minutes / 1440.0
    speeds = base[:, None] + daily_amp * np.sin(day_angle[None, :] + phase[:, None])

    events: list[WorkZoneEvent] = []
    dip = np.zeros((n_segments, length))
    for _ in range(n_events):
        seg = int(rng.integers(0, n_segments))
        start_step = int(rng.integers(0, max(1, length - event_duration_steps)))
        end_step = min(start_step + event_duration_steps, length)
        events.append(WorkZoneEvent(
            segment_id=ids[seg],
            start=calendar.time_at(start_step),
            end=calendar.time_at(end_step),
        ))
        lo = min(start_step + onset_lag_steps, end_step)
        if lo >= end_step:
            continue
        for j in range(n_segments):
            gap = abs(j - seg)
            if gap == 0:
                amount = dip_mph
            elif gap == 1:
                amount = dip_mph * neighbor_dip_frac
            else:
                continue
            np.maximum(dip[j, lo:end_step], amount, out=dip[j, lo:end_step])

    for _ in range(n_phantom_dips):
        seg = int(rng.integers(0, n_segments))
        duration = int(rng.integers(phantom_duration_steps[0],
                                    phantom_duration_steps[1] + 1))
        start_step = int(rng.integers(0, max(1, length - duration)))
        span = slice(start_step, min(start_step + duration, length))
        np.maximum(dip[seg, span], phantom_depth_mph, out=dip[seg, span])

    speeds = speeds - dip + rng.normal(0.0, noise_mph, size=speeds.shape)
    speeds = np.maximum(speeds, 5.0)

    mask = (rng.random(speeds.shape) >= missing_frac).astype(np.float64)
    values = np.where(mask == 1.0, speeds, 0.0)
    return network, SpeedSeries(values=values, mask=mask), calendar, events


def write_corridor_csvs(directory, network: RoadNetwork, series: SpeedSeries,
                        calendar: Calendar, events) -> dict[str, str]:
    """Write speeds.csv / workzones.csv / distances.csv; returns the paths."""
    import os

    os.makedirs(directory, exist_ok=True)
    paths = {name: os.path.join(directory, f"{name}.csv")
             for name in ("speeds", "workzones", "distances")}

    with open(paths["speeds"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *network.segment_ids])
        for t in range(calendar.length):
            row = [calendar.time_at(t).isoformat()]
            for i in range(network.n_segments):
                row.append("" if series.mask[i, t] == 0.0 else f"{series.values[i, t]:.3f}")
            writer.writerow(row)

    with open(paths["workzones"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", "start", "end"])
        for event in events:
            writer.writerow([event.segment_id, event.start.isoformat(), event.end.isoformat()])

    with open(paths["distances"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(network.segment_ids))
        for i in range(network.n_segments):
            writer.writerow([f"{d:.6f}" for d in network.distance[i]])

    return paths
