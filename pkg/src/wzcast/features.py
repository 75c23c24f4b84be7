"""Feature ingestion and aggregation.

Raw speed observations, the work-zone schedule, and the corridor
geometry are turned into five aligned N x T feature maps:

* ``X_S``   observed speed (missing cells imputed with the history mean,
  but excluded from losses and metrics through the mask),
* ``X_AS``  average historical speed per weekly time slot,
* ``X_D``   difference between observed and average speed,
* ``X_BC``  binary work-zone occupancy,
* ``X_C``   work-zone influence spread to neighbors with a Gaussian
  kernel on road distance and gated so that only events that actually
  slowed traffic remain.

Statistics (min/max bounds and the history mean) are computed on the
leading training fraction of the timeline only.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .errors import ConfigError, DataError
from .hypergraph import RoadNetwork

log = logging.getLogger(__name__)

MINUTES_PER_WEEK = 7 * 1440


@dataclass(frozen=True)
class Calendar:
    """Uniform sampling grid: start time, step in minutes, length T."""

    start: datetime
    step_minutes: int
    length: int

    def __post_init__(self):
        if self.step_minutes <= 0 or 1440 % self.step_minutes != 0:
            raise ConfigError(f"step {self.step_minutes} min must divide 1440")
        if self.length < 1:
            raise ConfigError("calendar length must be positive")

    @property
    def num_weekly_slots(self) -> int:
        return MINUTES_PER_WEEK // self.step_minutes

    def time_at(self, t: int) -> datetime:
        return self.start + timedelta(minutes=t * self.step_minutes)

    def index_of(self, when: datetime) -> int:
        delta = (when - self.start).total_seconds() / 60.0
        steps = delta / self.step_minutes
        if steps != int(steps):
            raise DataError(f"timestamp {when.isoformat()} is off the sampling grid")
        return int(steps)

    def slot_of(self, t: int) -> int:
        """Weekly slot index of step t (Monday 00:00 is slot 0)."""
        when = self.time_at(t)
        minute = when.weekday() * 1440 + when.hour * 60 + when.minute
        return (minute // self.step_minutes) % self.num_weekly_slots

    def slots(self) -> np.ndarray:
        first = self.slot_of(0)
        return (first + np.arange(self.length)) % self.num_weekly_slots


@dataclass(frozen=True)
class SpeedSeries:
    """Observed speeds (MPH) with an observation mask (1 = observed)."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=np.float64)
        if values.ndim != 2 or mask.shape != values.shape:
            raise DataError("values and mask must be matching N x T matrices")
        if not np.all(np.isin(mask, (0.0, 1.0))):
            raise DataError("mask entries must be 0 or 1")
        if np.any(values[mask == 1.0] < 0):
            raise DataError("observed speeds must be nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WorkZoneEvent:
    """A maintenance event occupying one segment over a time interval."""

    segment_id: str
    start: datetime
    end: datetime

    def __post_init__(self):
        if self.start >= self.end:
            raise DataError(
                f"event on '{self.segment_id}' has start {self.start} >= end {self.end}")

    def active_range(self, calendar: Calendar) -> tuple[int, int]:
        """Half-open step range [lo, hi) during which the event is active."""
        total = (self.start - calendar.start).total_seconds() / 60.0
        lo = int(np.ceil(total / calendar.step_minutes))
        total_end = (self.end - calendar.start).total_seconds() / 60.0
        hi = int(np.ceil(total_end / calendar.step_minutes))
        return max(lo, 0), min(hi, calendar.length)


# -- file ingestion --------------------------------------------------------


def _parse_timestamp(text: str, where: str) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{where}: bad ISO-8601 timestamp '{text}'") from None


def load_speed_csv(path) -> tuple[SpeedSeries, Calendar, tuple[str, ...]]:
    """Read `timestamp,<seg>,<seg>,...` rows into a series plus calendar.

    A cell that is empty or exactly 0 marks a missing observation
    (mask 0). Timestamps must be strictly increasing on a uniform grid.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        segment_ids = tuple(c.strip() for c in header[1:])
        if not segment_ids:
            raise DataError(f"{path}: no segment columns")
        times: list[datetime] = []
        rows: list[list[float]] = []
        mask_rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(segment_ids) + 1:
                raise DataError(f"{path}:{lineno}: expected {len(segment_ids) + 1} columns, got {len(row)}")
            times.append(_parse_timestamp(row[0], f"{path}:{lineno}"))
            vals, mvals = [], []
            for seg, cell in zip(segment_ids, row[1:]):
                cell = cell.strip()
                if cell == "":
                    vals.append(0.0)
                    mvals.append(0.0)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric speed '{cell}' for segment {seg}") from None
                if v == 0.0:
                    vals.append(0.0)
                    mvals.append(0.0)
                else:
                    vals.append(v)
                    mvals.append(1.0)
            rows.append(vals)
            mask_rows.append(mvals)

    if len(times) < 2:
        raise DataError(f"{path}: need at least two rows to infer the step")
    step = (times[1] - times[0]).total_seconds() / 60.0
    if step <= 0 or step != int(step) or 1440 % int(step) != 0:
        raise DataError(f"{path}: step of {step} minutes is not a divisor of a day")
    for i in range(1, len(times)):
        gap = (times[i] - times[i - 1]).total_seconds() / 60.0
        if gap != step:
            raise DataError(
                f"{path}: irregular timestamp at row {i + 2} ({times[i].isoformat()}): "
                f"gap of {gap:g} min in a {step:g}-min series")
    calendar = Calendar(start=times[0], step_minutes=int(step), length=len(times))
    series = SpeedSeries(values=np.array(rows).T, mask=np.array(mask_rows).T)
    return series, calendar, segment_ids


def load_workzones_csv(path) -> list[WorkZoneEvent]:
    """Read `segment_id,start,end` event rows (ISO-8601 times)."""
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"segment_id", "start", "end"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected columns segment_id,start,end")
        for lineno, row in enumerate(reader, start=2):
            events.append(WorkZoneEvent(
                segment_id=row["segment_id"].strip(),
                start=_parse_timestamp(row["start"], f"{path}:{lineno}"),
                end=_parse_timestamp(row["end"], f"{path}:{lineno}"),
            ))
    return events


# -- feature maps -----------------------------------------------------------


def average_history_map(series: SpeedSeries, calendar: Calendar,
                        fit_steps: int | None = None) -> np.ndarray:
    """Mean observed speed per (segment, weekly slot), expanded to N x T.

    Only steps before `fit_steps` contribute to the means, so later
    (validation/test) values cannot leak in. A slot with no observations
    falls back to the segment's global observed mean.
    """
    if calendar.length != series.n_steps:
        raise DataError("calendar length does not match the series")
    fit = series.n_steps if fit_steps is None else int(fit_steps)
    if not 1 <= fit <= series.n_steps:
        raise ConfigError(f"fit_steps {fit} outside [1, {series.n_steps}]")
    slots = calendar.slots()
    n_slots = calendar.num_weekly_slots
    n = series.n_segments

    vals = series.values[:, :fit]
    mask = series.mask[:, :fit]
    slot_ids = slots[:fit]
    sums = np.zeros((n, n_slots))
    counts = np.zeros((n, n_slots))
    np.add.at(sums.T, slot_ids, (vals * mask).T)
    np.add.at(counts.T, slot_ids, mask.T)

    seg_count = mask.sum(axis=1)
    if np.any(seg_count == 0):
        bad = int(np.argmax(seg_count == 0))
        raise DataError(f"segment index {bad} has no observed values in the training range")
    seg_mean = (vals * mask).sum(axis=1) / seg_count

    profile = np.where(counts > 0, sums / np.maximum(counts, 1.0), seg_mean[:, None])
    holes = int((counts == 0).sum())
    if holes:
        log.warning("average_history_map: %d (segment, slot) cells had no observations; "
                    "filled with segment means", holes)
    return profile[:, slots]


def diff_map(x_speed: np.ndarray, x_avg: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Observed minus average speed where observed; 0 elsewhere.

    Negative values mean traffic is slower than its historical norm.
    """
    if x_speed.shape != x_avg.shape or x_speed.shape != mask.shape:
        raise DataError("diff_map inputs must share one N x T shape")
    return np.where(mask == 1.0, x_speed - x_avg, 0.0)


def binary_workzone_map(events, network: RoadNetwork, calendar: Calendar) -> np.ndarray:
    """1 where the segment itself hosts an active event, else 0."""
    out = np.zeros((network.n_segments, calendar.length))
    for event in events:
        i = network.index_of(event.segment_id)
        lo, hi = event.active_range(calendar)
        if lo < hi:
            out[i, lo:hi] = 1.0
    return out


def construction_map(events, network: RoadNetwork, calendar: Calendar,
                     sigma: float, x_diff: np.ndarray | None = None,
                     delta: float | None = None) -> np.ndarray:
    """Work-zone influence map in [0, 1].

    Each active event radiates exp(-d^2 / 2 sigma^2) over road distance
    d; overlapping events combine by max. When `x_diff` and `delta` are
    given, cells whose observed slowdown did not reach `delta` are
    zeroed: an event only counts where traffic actually slowed.
    """
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    raw = np.zeros((network.n_segments, calendar.length))
    for event in events:
        i = network.index_of(event.segment_id)
        lo, hi = event.active_range(calendar)
        if lo >= hi:
            continue
        kernel = np.exp(-network.distance[:, i] ** 2 / (2.0 * sigma ** 2))
        np.maximum(raw[:, lo:hi], kernel[:, None], out=raw[:, lo:hi])
    if x_diff is not None and delta is not None:
        if x_diff.shape != raw.shape:
            raise DataError("diff map shape does not match the corridor")
        raw = np.where(x_diff <= delta, raw, 0.0)
    return raw


def normalize(x: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    """Min-max scale into [0, 1] given training-split bounds."""
    if vmax <= vmin:
        raise DataError(f"degenerate bounds: vmin {vmin} >= vmax {vmax}")
    return (np.asarray(x, dtype=np.float64) - vmin) / (vmax - vmin)


def denormalize(x: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    if vmax <= vmin:
        raise DataError(f"degenerate bounds: vmin {vmin} >= vmax {vmax}")
    return np.asarray(x, dtype=np.float64) * (vmax - vmin) + vmin


# -- the assembled bundle ---------------------------------------------------


@dataclass(frozen=True)
class FeatureBundle:
    """All aligned feature maps for one corridor.

    ``x_speed`` has missing cells imputed with ``x_avg`` so the model
    always sees a dense input; ``mask`` still records which cells were
    observed, and only those enter losses and metrics.
    """

    segment_ids: tuple[str, ...]
    calendar: Calendar
    x_speed: np.ndarray
    x_avg: np.ndarray
    x_diff: np.ndarray
    x_constr: np.ndarray
    x_binary: np.ndarray
    time_slots: np.ndarray
    mask: np.ndarray
    vmin: float
    vmax: float

    def __post_init__(self):
        n, t = len(self.segment_ids), self.calendar.length
        for field_name in ("x_speed", "x_avg", "x_diff", "x_constr", "x_binary", "mask"):
            arr = getattr(self, field_name)
            if arr.shape != (n, t):
                raise DataError(f"{field_name} shape {arr.shape} != ({n}, {t})")
        if self.time_slots.shape != (t,):
            raise DataError("time_slots must have one entry per step")
        if np.any((self.x_constr < 0) | (self.x_constr > 1)):
            raise DataError("construction map must lie in [0, 1]")

    @property
    def n_segments(self) -> int:
        return len(self.segment_ids)

    @property
    def n_steps(self) -> int:
        return self.calendar.length


def build_feature_bundle(series: SpeedSeries, calendar: Calendar,
                         segment_ids, events, network: RoadNetwork, *,
                         delta_mph: float = -5.0, sigma_miles: float = 1.0,
                         train_frac: float = 0.7) -> FeatureBundle:
    """Derive every feature map from raw observations and the event log."""
    segment_ids = tuple(str(s) for s in segment_ids)
    if segment_ids != network.segment_ids:
        raise DataError("speed columns do not match the network's segment ids")
    if series.n_segments != network.n_segments:
        raise DataError("series segment count does not match the network")
    if not 0 < train_frac <= 1:
        raise ConfigError("train_frac must be in (0, 1]")
    if delta_mph >= 0:
        raise ConfigError("delta must be negative: disruptions slow traffic")

    fit_steps = max(1, int(series.n_steps * train_frac))
    observed = series.values[:, :fit_steps][series.mask[:, :fit_steps] == 1.0]
    if observed.size == 0:
        raise DataError("no observed values in the training range")
    vmin, vmax = float(observed.min()), float(observed.max())
    if vmax <= vmin:
        raise DataError("degenerate data: all observed speeds identical")

    x_avg = average_history_map(series, calendar, fit_steps=fit_steps)
    x_diff = diff_map(series.values, x_avg, series.mask)
    x_binary = binary_workzone_map(events, network, calendar)
    x_constr = construction_map(events, network, calendar, sigma_miles,
                                x_diff=x_diff, delta=delta_mph)
    x_speed = np.where(series.mask == 1.0, series.values, x_avg)
    return FeatureBundle(
        segment_ids=segment_ids,
        calendar=calendar,
        x_speed=x_speed,
        x_avg=x_avg,
        x_diff=x_diff,
        x_constr=x_constr,
        x_binary=x_binary,
        time_slots=calendar.slots(),
        mask=series.mask.copy(),
        vmin=vmin,
        vmax=vmax,
    )


# -- windowed samples --------------------------------------------------------


@dataclass(frozen=True)
class ForecastSample:
    """One training/eval unit anchored at step `anchor`.

    Inputs cover [anchor - H, anchor); the target covers
    [anchor, anchor + P). Speeds are in normalized units.
    """

    anchor: int
    x_speed: np.ndarray   # (N, H) normalized, imputed
    x_constr: np.ndarray  # (N, H) in [0, 1]
    slots: np.ndarray     # (H,) weekly slot per history step
    y: np.ndarray         # (N, P) normalized
    y_mask: np.ndarray    # (N, P) 1 where observed


@dataclass(frozen=True)
class SplitSamples:
    train: tuple[ForecastSample, ...]
    val: tuple[ForecastSample, ...]
    test: tuple[ForecastSample, ...]

    def all_samples(self) -> tuple[ForecastSample, ...]:
        return self.train + self.val + self.test


def windowize(bundle: FeatureBundle, history: int, horizon: int,
              split: tuple[float, float, float] = (0.7, 0.1, 0.2)) -> SplitSamples:
    """Slice the bundle into overlapping samples and split chronologically.

    Anchors run from `history` to T - `horizon`; the split ratios apply
    to the anchor sequence in order (no shuffling). Samples whose target
    window is fully unobserved are dropped.
    """
    t_total = bundle.n_steps
    if history < 1 or horizon < 1:
        raise ConfigError("history and horizon must be at least 1")
    if history + horizon > t_total:
        raise ConfigError(f"history + horizon = {history + horizon} exceeds T = {t_total}")
    if len(split) != 3 or any(r < 0 for r in split) or abs(sum(split) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three nonnegatives summing to 1, got {split}")

    speeds = normalize(bundle.x_speed, bundle.vmin, bundle.vmax)
    anchors = np.arange(history, t_total - horizon + 1)
    n = len(anchors)
    n_train = int(n * split[0])
    n_val = int(n * split[1])

    def make(anchor: int) -> ForecastSample | None:
        y_mask = bundle.mask[:, anchor:anchor + horizon]
        if not y_mask.any():
            return None
        return ForecastSample(
            anchor=int(anchor),
            x_speed=speeds[:, anchor - history:anchor],
            x_constr=bundle.x_constr[:, anchor - history:anchor],
            slots=bundle.time_slots[anchor - history:anchor],
            y=speeds[:, anchor:anchor + horizon],
            y_mask=y_mask.astype(np.float64),
        )

    groups: list[tuple[ForecastSample, ...]] = []
    for chunk in (anchors[:n_train], anchors[n_train:n_train + n_val], anchors[n_train + n_val:]):
        made = [make(a) for a in chunk]
        groups.append(tuple(s for s in made if s is not None))
    return SplitSamples(train=groups[0], val=groups[1], test=groups[2])


def stack_samples(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into batch arrays (speed, constr, slots, y, y_mask)."""
    if not samples:
        raise DataError("cannot stack an empty sample list")
    return (np.stack([s.x_speed for s in samples]),
            np.stack([s.x_constr for s in samples]),
            np.stack([s.slots for s in samples]),
            np.stack([s.y for s in samples]),
            np.stack([s.y_mask for s in samples]))


# -- bundle cache -------------------------------------------------------------


def save_bundle(path, bundle: FeatureBundle) -> None:
    """Cache a bundle as a compressed .npz archive."""
    np.savez_compressed(
        path,
        format_version=np.int64(1),
        segment_ids=np.array(bundle.segment_ids),
        calendar_start=np.str_(bundle.calendar.start.isoformat()),
        step_minutes=np.int64(bundle.calendar.step_minutes),
        x_speed=bundle.x_speed,
        x_avg=bundle.x_avg,
        x_diff=bundle.x_diff,
        x_constr=bundle.x_constr,
        x_binary=bundle.x_binary,
        time_slots=bundle.time_slots,
        mask=bundle.mask,
        vmin=np.float64(bundle.vmin),
        vmax=np.float64(bundle.vmax),
    )


def load_bundle(path) -> FeatureBundle:
    with np.load(path, allow_pickle=False) as data:
        if int(data["format_version"]) != 1:
            raise DataError(f"{path}: unsupported bundle format version")
        calendar = Calendar(
            start=datetime.fromisoformat(str(data["calendar_start"])),
            step_minutes=int(data["step_minutes"]),
            length=int(data["x_speed"].shape[1]),
        )
        return FeatureBundle(
            segment_ids=tuple(str(s) for s in data["segment_ids"]),
            calendar=calendar,
            x_speed=data["x_speed"],
            x_avg=data["x_avg"],
            x_diff=data["x_diff"],
            x_constr=data["x_constr"],
            x_binary=data["x_binary"],
            time_slots=data["time_slots"],
            mask=data["mask"],
            vmin=float(data["vmin"]),
            vmax=float(data["vmax"]),
        )
