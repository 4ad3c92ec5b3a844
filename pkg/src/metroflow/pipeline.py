"""From per-train arrivals to regression-ready interval samples.

Three stages: aggregate arrival events into ten-minute interval observations
(train flow = mean inverse headway, movements = mean per-train boardings +
alightings), attach the same-interval previous-workday movements as the
instrument, and, when no real event feed is available, generate synthetic
per-station arrival streams whose interval aggregates match a reference
moment profile.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import ConfigError
from .simulation import TrajectoryLog

WINDOW_S = 600.0


@dataclass(frozen=True)
class ArrivalRecord:
    """One train arrival with its per-train passenger movements."""

    day: int
    t_s: float
    station: str
    direction: str  # up | down
    movements: float


@dataclass(frozen=True)
class IntervalObservation:
    """Ten-minute aggregate: q in trains/10min, n in movements per train."""

    station: str
    direction: str
    day: int
    interval: int
    q: float
    n: float


@dataclass(frozen=True)
class InstrumentedSample:
    """Interval observation plus its previous-workday instrument z."""

    station: str
    direction: str
    day: int
    interval: int
    q: float
    n: float
    z: float


@dataclass(frozen=True)
class StationProfile:
    """Moment targets for one (station, direction) stream."""

    station: str
    direction: str
    flow_min: float
    flow_max: float
    flow_mean: float
    flow_sd: float
    movements_min: float
    movements_max: float
    movements_mean: float
    movements_sd: float

    def __post_init__(self) -> None:
        for prefix in ("flow", "movements"):
            lo = getattr(self, f"{prefix}_min")
            hi = getattr(self, f"{prefix}_max")
            mean = getattr(self, f"{prefix}_mean")
            sd = getattr(self, f"{prefix}_sd")
            if sd < 0:
                raise ValueError(f"{prefix}_sd must be >= 0")
            if not (lo <= mean <= hi):
                raise ValueError(f"need {prefix}_min <= mean <= {prefix}_max")

    @property
    def slug(self) -> str:
        return f"{self.station}-{self.direction}"


# ---------------------------------------------------------------------------
# aggregation


def aggregate_intervals(records: Sequence[ArrivalRecord],
                        window_s: float = WINDOW_S,
                        origin_s: float = 0.0) -> list[IntervalObservation]:
    """Ten-minute interval observations from time-ordered arrivals.

    An arrival is usable once it has a measured headway, i.e. it is not the
    first of its (station, direction, day) stream; the headway may reach back
    to the last arrival of the previous window. Windows with fewer than two
    usable arrivals are dropped.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    for r in records:
        if not isinstance(r, ArrivalRecord):
            raise TypeError(
                f"aggregate_intervals expects ArrivalRecord inputs, got "
                f"{type(r).__name__}; interval data cannot be re-aggregated")

    streams: dict[tuple[str, str, int], list[ArrivalRecord]] = {}
    for r in records:
        streams.setdefault((r.station, r.direction, r.day), []).append(r)

    out: list[IntervalObservation] = []
    for (station, direction, day), stream in sorted(streams.items()):
        if any(b.t_s <= a.t_s for a, b in zip(stream, stream[1:])):
            raise ValueError(
                f"arrivals for {station}/{direction} day {day} are not "
                f"strictly time-ordered")
        per_window: dict[int, list[tuple[float, float]]] = {}
        for prev, cur in zip(stream, stream[1:]):
            headway = cur.t_s - prev.t_s
            idx = math.floor((cur.t_s - origin_s) / window_s)
            per_window.setdefault(idx, []).append((headway, cur.movements))
        for idx in sorted(per_window):
            usable = per_window[idx]
            if len(usable) < 2:
                continue
            q = float(np.mean([window_s / h for h, _ in usable]))
            n = float(np.mean([m for _, m in usable]))
            out.append(IntervalObservation(station=station, direction=direction,
                                           day=day, interval=idx, q=q, n=n))
    return out


def arrival_records_from_simulation(log: TrajectoryLog, station: Optional[int] = None,
                                    station_name: str = "sim",
                                    direction: str = "down",
                                    day: int = 0) -> list[ArrivalRecord]:
    """Adapt one run's arrival events at a station into ArrivalRecords."""
    if station is None:
        station = len(log.config.line.station_positions) - 1
    return [ArrivalRecord(day=day, t_s=float(e.t), station=station_name,
                          direction=direction, movements=float(e.movements))
            for e in log.events if e.kind == "arrival" and e.station == station]


def simulate_service_days(base, day_scales: Sequence[float],
                          station: Optional[int] = None,
                          station_name: str = "sim",
                          direction: str = "down") -> list[ArrivalRecord]:
    """Replay one scenario over many days, scaling demand per day.

    Day d runs ``base`` with its demand multiplied by ``day_scales[d]``,
    giving the day-to-day variation the instrument join needs.
    """
    from dataclasses import replace

    from .simulation import run_scenario

    records: list[ArrivalRecord] = []
    for day, scale in enumerate(day_scales):
        cfg = replace(base, demand=replace(base.demand, scale=float(scale)),
                      seed=base.seed + day)
        log = run_scenario(cfg)
        records.extend(arrival_records_from_simulation(
            log, station=station, station_name=station_name,
            direction=direction, day=day))
    return records


# ---------------------------------------------------------------------------
# instruments


def parse_calendar(text: str) -> list[dt.date]:
    """Newline-delimited ISO dates; line i is day index i of the dataset."""
    dates = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            dates.append(dt.date.fromisoformat(stripped))
        except ValueError:
            raise ConfigError(
                f"calendar line {lineno}: not an ISO date: {stripped!r}") from None
    return dates


def workdays(start: dt.date, count: int) -> list[dt.date]:
    """The next ``count`` weekdays from ``start`` inclusive, skipping weekends."""
    out: list[dt.date] = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return out


def build_instruments(observations: Sequence[IntervalObservation],
                      calendar: Sequence[dt.date]) -> list[InstrumentedSample]:
    """Join each workday observation with the previous workday, same interval.

    Weekend days are neither analysis days nor instrument sources; the first
    workday in the calendar contributes no samples.
    """
    if not calendar:
        raise ConfigError("calendar is empty")
    is_work = [d.weekday() < 5 for d in calendar]
    if sum(is_work) < 2:
        raise ConfigError("calendar must contain at least two workdays")
    prev_work: list[Optional[int]] = []
    last: Optional[int] = None
    for t, work in enumerate(is_work):
        prev_work.append(last)
        if work:
            last = t

    by_key = {(o.station, o.direction, o.day, o.interval): o for o in observations}
    out: list[InstrumentedSample] = []
    for o in observations:
        if o.day < 0 or o.day >= len(calendar):
            raise ConfigError(
                f"day index {o.day} outside the {len(calendar)}-day calendar")
        if not is_work[o.day]:
            continue
        source_day = prev_work[o.day]
        if source_day is None:
            continue
        source = by_key.get((o.station, o.direction, source_day, o.interval))
        if source is None:
            continue
        out.append(InstrumentedSample(station=o.station, direction=o.direction,
                                      day=o.day, interval=o.interval,
                                      q=o.q, n=o.n, z=source.n))
    return out


def first_stage_sample_relevance(samples: Sequence[InstrumentedSample]) -> float:
    """Spearman rank correlation between movements and their instrument."""
    from scipy.stats import spearmanr
    n = [s.n for s in samples]
    z = [s.z for s in samples]
    return float(spearmanr(n, z).statistic)


# ---------------------------------------------------------------------------
# synthetic generation


def _two_peak_shape(count: int) -> np.ndarray:
    # AM and PM demand peaks over the service day, AM the stronger
    u = (np.arange(count) + 0.5) / count
    am = 1.6 * np.exp(-0.5 * ((u - 0.15) / 0.07) ** 2)
    pm = 1.2 * np.exp(-0.5 * ((u - 0.65) / 0.09) ** 2)
    return 1.0 + am + pm


def _standardize(matrix: np.ndarray, mean: float, sd: float,
                 lo: float, hi: float) -> np.ndarray:
    observed_sd = matrix.std()
    if sd == 0.0 or observed_sd == 0.0:
        return np.full_like(matrix, mean)
    scaled = (matrix - matrix.mean()) / observed_sd * sd + mean
    return np.clip(scaled, lo, hi)


def generate_synthetic(profile: StationProfile, days: int, seed: int = 0,
                       intervals_per_day: int = 108,
                       window_s: float = WINDOW_S,
                       rho: float = 0.7) -> list[ArrivalRecord]:
    """Arrival stream whose interval aggregates match the profile moments.

    Each day follows a smooth two-peak demand shape multiplied by an AR(1)
    day-level factor (autocorrelation ``rho``), which is what makes the
    previous-workday instrument relevant. Interval movement values are
    affine-rescaled so their matrix moments hit the profile's mean and sd
    exactly before clamping to the profile's observed range; flow values are
    additionally floored so every window keeps at least two arrivals.
    """
    if days < 1 or intervals_per_day < 1:
        raise ValueError("days and intervals_per_day must be >= 1")
    rng = np.random.default_rng(seed)
    shape = _two_peak_shape(intervals_per_day)

    mult = np.empty(days)
    level = 0.0
    for t in range(days):
        level = rho * level + math.sqrt(1.0 - rho * rho) * rng.normal()
        mult[t] = math.exp(0.18 * level)

    noise_n = np.exp(0.25 * rng.standard_normal((days, intervals_per_day)))
    noise_q = np.exp(0.10 * rng.standard_normal((days, intervals_per_day)))
    raw_n = np.outer(mult, shape) * noise_n
    raw_q = np.outer(np.sqrt(mult), shape) * noise_q

    movements = _standardize(raw_n, profile.movements_mean, profile.movements_sd,
                             max(profile.movements_min, 0.0),
                             profile.movements_max)
    # flow floor: > 2 arrivals per window needs headway <= window/2.05
    flow_floor = max(profile.flow_min, 2.05)
    flows = _standardize(raw_q, profile.flow_mean, profile.flow_sd,
                         flow_floor, profile.flow_max)

    records: list[ArrivalRecord] = []
    for t in range(days):
        for i in range(intervals_per_day):
            headway = window_s / flows[t, i]
            start = i * window_s
            at = start + 0.5 * headway
            while at < start + window_s:
                records.append(ArrivalRecord(day=t, t_s=float(at),
                                             station=profile.station,
                                             direction=profile.direction,
                                             movements=float(movements[t, i])))
                at += headway
    return records


# ---------------------------------------------------------------------------
# bundled per-station moment profiles


def _profiles() -> dict[str, StationProfile]:
    rows = [
        # station, direction, flow (min,max,mean,sd), movements (min,max,mean,sd)
        ("wong-tai-sin", "down", (0.35, 8.58, 3.23, 1.00), (8.00, 653.00, 224.50, 87.62)),
        ("wong-tai-sin", "up", (0.33, 9.02, 3.40, 1.06), (4.00, 506.00, 210.00, 67.36)),
        ("lok-fu", "down", (0.35, 7.54, 3.33, 1.03), (3.00, 381.00, 105.28, 41.24)),
        ("lok-fu", "up", (0.32, 9.20, 3.38, 1.07), (3.00, 283.50, 106.60, 40.79)),
        ("kowloon-tong", "down", (0.33, 7.74, 3.32, 1.02), (19.00, 2244.00, 551.70, 222.28)),
        ("kowloon-tong", "up", (0.38, 8.75, 3.34, 1.05), (10.00, 1574.50, 519.50, 191.67)),
        ("shek-kip-mei", "down", (0.33, 8.70, 3.34, 1.01), (3.00, 293.00, 88.67, 31.99)),
        ("shek-kip-mei", "up", (0.34, 9.68, 3.35, 1.04), (5.33, 406.33, 86.10, 33.19)),
        ("prince-edward", "down", (0.33, 8.70, 3.34, 1.04), (6.00, 1523.00, 451.50, 175.94)),
        ("prince-edward", "up", (0.36, 9.49, 3.32, 1.02), (3.00, 1703.50, 416.00, 158.57)),
        ("mong-kok", "down", (0.34, 8.19, 3.35, 1.01), (10.00, 1697.70, 544.60, 257.76)),
        ("mong-kok", "up", (0.37, 10.35, 3.02, 1.00), (12.00, 1595.00, 293.40, 146.84)),
        ("yau-ma-tei", "down", (0.34, 8.25, 3.34, 1.02), (2.00, 398.00, 115.53, 46.66)),
        ("yau-ma-tei", "up", (0.33, 10.79, 3.29, 1.00), (29.00, 2798.00, 524.70, 274.03)),
    ]
    profiles = {}
    for station, direction, flow, mov in rows:
        p = StationProfile(station=station, direction=direction,
                           flow_min=flow[0], flow_max=flow[1],
                           flow_mean=flow[2], flow_sd=flow[3],
                           movements_min=mov[0], movements_max=mov[1],
                           movements_mean=mov[2], movements_sd=mov[3])
        profiles[p.slug] = p
    return profiles


STATION_PROFILES: dict[str, StationProfile] = _profiles()
