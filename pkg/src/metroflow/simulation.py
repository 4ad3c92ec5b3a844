"""Single-track metro line simulator.

One-metre cells, one-second steps, integer velocities. Trains follow a
moving-block rule: each keeps an instantaneous braking distance
``v^2/(2b) + SM`` clear of its leader, brakes onto empty stations along the
stopping envelope ``int(sqrt(2bG))``, and dwells at stations. The third
station's dwell grows linearly once the passenger movements accumulated since
the previous arrival exceed a critical threshold, which is the congestion
feedback the whole exercise is about. Injection at the upstream boundary
follows a decreasing-interval timetable; the downstream boundary is open.

Safety comparisons are done in twice-scaled integers so no float ever enters
the movement logic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Union


class CollisionError(RuntimeError):
    """Two trains in one cell or ordering violated; carries a state dump."""


class ConservationError(RuntimeError):
    """Train count bookkeeping went out of balance."""


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class LineConfig:
    """Geometry and kinematic limits of the line."""

    length_cells: int = 4000
    station_positions: tuple[int, ...] = (1000, 2000, 3000)
    horizon_s: int = 3600
    max_velocity: int = 20
    acceleration: int = 1
    deceleration: int = 1
    safety_margin: int = 50

    def __post_init__(self) -> None:
        if self.length_cells < 2:
            raise ValueError("length_cells must be >= 2")
        if self.horizon_s < 1:
            raise ValueError("horizon_s must be >= 1")
        if self.max_velocity < 1 or self.acceleration < 1 or self.deceleration < 1:
            raise ValueError("max_velocity, acceleration, deceleration must be >= 1")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be >= 0")
        pos = self.station_positions
        if any(not (1 < p < self.length_cells) for p in pos):
            raise ValueError("station positions must lie strictly inside (1, length)")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("station positions must be strictly increasing")


@dataclass(frozen=True)
class ConstantDwell:
    """Fixed stop duration in seconds."""

    seconds: int = 30

    def __post_init__(self) -> None:
        if self.seconds < 1:
            raise ValueError("dwell seconds must be >= 1")


@dataclass(frozen=True)
class BottleneckDwell:
    """Congestion-dependent dwell.

    Passenger movements accumulated over the arrival headway H at demand rate
    A (pax/s) give N = A*H. Dwell is ``base_s`` while N stays at or below
    ``critical_movements`` and grows by ``growth_s_per_pax`` per excess
    passenger beyond it.
    """

    base_s: int = 40
    critical_movements: float = 400.0
    growth_s_per_pax: float = 0.1

    def __post_init__(self) -> None:
        if self.base_s < 1:
            raise ValueError("base_s must be >= 1")
        if self.critical_movements < 0 or self.growth_s_per_pax < 0:
            raise ValueError("critical_movements and growth_s_per_pax must be >= 0")


DwellModel = Union[ConstantDwell, BottleneckDwell]


def bottleneck_dwell_time(model: BottleneckDwell, movement_rate: float,
                          headway_s: float) -> tuple[int, float]:
    """Dwell seconds for one arrival, plus the movements N it was based on.

    Rounded half-up to the nearest whole second for the one-second clock.
    """
    if headway_s <= 0:
        raise ValueError("headway must be positive")
    if movement_rate < 0:
        raise ValueError("movement rate must be >= 0")
    movements = movement_rate * headway_s
    excess = max(0.0, movements - model.critical_movements)
    seconds = int(math.floor(model.base_s + model.growth_s_per_pax * excess + 0.5))
    return seconds, movements


@dataclass(frozen=True)
class DemandRamp:
    """Linear ramp of the station demand rate (pax/s).

    ``cap`` models flow-rate control at the gates: the realized rate never
    exceeds it. ``scale`` is a day-level multiplier used when one config is
    replayed over many service days.
    """

    initial: float = 0.0
    peak: float = 10.0
    increment_per_s: float = 0.005
    cap: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.initial < 0 or self.peak < self.initial:
            raise ValueError("need 0 <= initial <= peak")
        if self.increment_per_s < 0:
            raise ValueError("increment_per_s must be >= 0")
        if self.cap is not None and self.cap < 0:
            raise ValueError("cap must be >= 0")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    def rate(self, t: int) -> float:
        r = self.scale * min(self.initial + self.increment_per_s * t, self.peak)
        if self.cap is not None:
            r = min(r, self.cap)
        return r


@dataclass(frozen=True)
class InjectionSchedule:
    """Upstream entry timetable: interval shrinks stepwise down to a floor."""

    start_s: int = 120
    decrement_s: int = 5
    period_s: int = 120
    floor_s: int = 60

    def __post_init__(self) -> None:
        if self.start_s < 1 or self.floor_s < 1:
            raise ValueError("start_s and floor_s must be >= 1")
        if self.floor_s > self.start_s:
            raise ValueError("floor_s must not exceed start_s")
        if self.decrement_s < 0 or self.period_s < 1:
            raise ValueError("decrement_s >= 0 and period_s >= 1 required")

    def interval(self, t: int) -> int:
        return max(self.floor_s, self.start_s - self.decrement_s * (t // self.period_s))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one run needs."""

    line: LineConfig = field(default_factory=LineConfig)
    dwell_models: tuple[DwellModel, ...] = (
        ConstantDwell(30), ConstantDwell(30), BottleneckDwell())
    demand: DemandRamp = field(default_factory=DemandRamp)
    injection: InjectionSchedule = field(default_factory=InjectionSchedule)
    seed: int = 0
    name: str = "custom"

    def __post_init__(self) -> None:
        if len(self.dwell_models) != len(self.line.station_positions):
            raise ValueError("need one dwell model per station")


# ---------------------------------------------------------------------------
# safety arithmetic (integer only)


def min_instantaneous_distance(velocity: int, deceleration: int,
                               safety_margin: int) -> Fraction:
    """Moving-block headway distance v^2/(2b) + SM, exact."""
    if velocity < 0 or deceleration < 1 or safety_margin < 0:
        raise ValueError("need velocity >= 0, deceleration >= 1, safety_margin >= 0")
    return Fraction(velocity * velocity, 2 * deceleration) + safety_margin


def stop_approach_velocity(gap: int, deceleration: int) -> int:
    """Largest integer velocity that can still stop within ``gap`` cells."""
    if gap < 0 or deceleration < 1:
        raise ValueError("need gap >= 0 and deceleration >= 1")
    return math.isqrt(2 * deceleration * gap)


def _gap_cmp(gap: int, velocity: int, deceleration: int, safety_margin: int) -> int:
    # sign of gap - (v^2/(2b) + SM), via 2b*gap vs v^2 + 2b*SM
    lhs = 2 * deceleration * gap
    rhs = velocity * velocity + 2 * deceleration * safety_margin
    return (lhs > rhs) - (lhs < rhs)


def _clearance_cmp(gap: int, acceleration: int, safety_margin: int) -> int:
    # sign of gap - (1/(2a) + SM), via 2a*gap vs 1 + 2a*SM
    lhs = 2 * acceleration * gap
    rhs = 1 + 2 * acceleration * safety_margin
    return (lhs > rhs) - (lhs < rhs)


# ---------------------------------------------------------------------------
# state and log


@dataclass
class TrainState:
    """Mutable per-train record; positions and velocities are integers."""

    index: int
    position: int
    velocity: int
    dwell_elapsed: int = 0
    dwell_target: Optional[int] = None  # set while stopped at a station


@dataclass(frozen=True)
class EventRecord:
    t: int
    kind: str  # entry | arrival | departure | exit
    train: int
    station: Optional[int] = None  # 0-based station index
    movements: Optional[float] = None
    headway_s: Optional[float] = None
    dwell_s: Optional[int] = None


@dataclass
class TrajectoryLog:
    """Per-second snapshots plus the event stream of one run."""

    config: ScenarioConfig
    times: list[int] = field(default_factory=list)
    train_ids: list[int] = field(default_factory=list)
    positions: list[int] = field(default_factory=list)
    velocities: list[int] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)
    injected: int = 0
    exited: int = 0

    def snapshot_arrays(self):
        import numpy as np
        return (np.asarray(self.times), np.asarray(self.train_ids),
                np.asarray(self.positions), np.asarray(self.velocities))


# ---------------------------------------------------------------------------
# engine


class Simulation:
    """Steps a :class:`ScenarioConfig` forward one second at a time."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.trains: list[TrainState] = []  # front of line first
        self.log = TrajectoryLog(config)
        self._next_index = 1
        self._last_entry_t: Optional[int] = None
        self._last_arrival_t: dict[int, int] = {}  # station index -> time
        self._station_lookup = {p: i for i, p in enumerate(config.line.station_positions)}

    # -- per-train movement ------------------------------------------------

    def _follow(self, v: int, gap: int, line: LineConfig) -> int:
        """Case: a leader (train, or train at a station) is the next obstacle."""
        c = _gap_cmp(gap, v, line.deceleration, line.safety_margin)
        if c > 0:
            nv = min(v + line.acceleration, line.max_velocity)
        elif c < 0:
            nv = max(v - line.deceleration, 0)
        else:
            nv = v
        # never advance into the leader's previous cell; inert when SM >= v_max
        return min(nv, gap - 1) if nv >= gap else nv

    def _approach(self, v: int, gap: int, line: LineConfig) -> int:
        """Case: the next obstacle is an empty station ``gap`` cells ahead."""
        c = _gap_cmp(gap, v, line.deceleration, line.safety_margin)
        if c > 0:
            nv = min(v + line.acceleration, line.max_velocity)
        elif c < 0 or v == 0:
            # braking envelope; a standing train always restarts toward an
            # empty station, else it would be stranded inside its own margin
            nv = min(stop_approach_velocity(gap, line.deceleration),
                     v + line.acceleration, line.max_velocity)
        else:
            nv = v
        return min(nv, gap)  # stop at the station cell, never fly past

    def _dwell_step(self, train: TrainState, leader_pos: Optional[int],
                    line: LineConfig, t: int) -> int:
        """Case: at a station. Returns the new velocity."""
        assert train.dwell_target is not None
        if train.dwell_elapsed < train.dwell_target:
            train.dwell_elapsed += 1
            return 0
        # dwell complete: depart only with the clearance distance free
        if leader_pos is not None:
            gap = leader_pos - train.position
            if _clearance_cmp(gap, line.acceleration, line.safety_margin) <= 0:
                return 0  # held at the platform, dwell already served
        nv = min(train.velocity + line.acceleration, line.max_velocity)
        train.dwell_target = None
        train.dwell_elapsed = 0
        self.log.events.append(EventRecord(t, "departure", train.index,
                                           station=self._station_lookup[train.position]))
        return nv

    # -- station bookkeeping -------------------------------------------------

    def _register_arrival(self, train: TrainState, station_idx: int, t: int) -> None:
        cfg = self.config
        prev = self._last_arrival_t.get(station_idx)
        headway = float(t - prev) if prev is not None else float(cfg.injection.interval(t))
        rate = cfg.demand.rate(t)
        model = cfg.dwell_models[station_idx]
        if isinstance(model, BottleneckDwell):
            dwell, movements = bottleneck_dwell_time(model, rate, headway)
        else:
            dwell, movements = model.seconds, rate * headway
        train.dwell_target = dwell
        train.dwell_elapsed = 0
        self._last_arrival_t[station_idx] = t
        self.log.events.append(EventRecord(t, "arrival", train.index, station=station_idx,
                                           movements=movements, headway_s=headway,
                                           dwell_s=dwell))

    # -- one step ------------------------------------------------------------

    def step(self, t: int) -> None:
        """Advance the whole line from t-1 to t (parallel update)."""
        cfg = self.config
        line = cfg.line
        stations = line.station_positions
        old_pos = [tr.position for tr in self.trains]

        exited: list[int] = []
        for i, train in enumerate(self.trains):
            leader_pos = old_pos[i - 1] if i > 0 else None

            if train.dwell_target is not None:
                nv = self._dwell_step(train, leader_pos, line, t)
            else:
                nxt = next((p for p in stations if p > train.position), None)
                if leader_pos is not None and (nxt is None or leader_pos <= nxt):
                    nv = self._follow(train.velocity, leader_pos - train.position, line)
                elif nxt is not None:
                    nv = self._approach(train.velocity, nxt - train.position, line)
                else:
                    nv = min(train.velocity + line.acceleration, line.max_velocity)

            train.velocity = nv
            train.position += nv

            if train.position >= line.length_cells:
                exited.append(i)
                continue
            if train.dwell_target is None and train.position in self._station_lookup:
                self._register_arrival(train, self._station_lookup[train.position], t)

        for i in reversed(exited):
            tr = self.trains.pop(i)
            self.log.events.append(EventRecord(t, "exit", tr.index))
            self.log.exited += 1

        self._check_ordering(t)
        self._try_injection(t)

        for tr in self.trains:
            self.log.times.append(t)
            self.log.train_ids.append(tr.index)
            self.log.positions.append(tr.position)
            self.log.velocities.append(tr.velocity)

    def _try_injection(self, t: int) -> None:
        cfg = self.config
        line = cfg.line
        due = (self._last_entry_t is None
               or t - self._last_entry_t >= cfg.injection.interval(t))
        if not due:
            return
        if self.trains:
            rear_gap = self.trains[-1].position - 1
            if _gap_cmp(rear_gap, line.max_velocity, line.deceleration,
                        line.safety_margin) <= 0:
                return  # deferred, retried next second
        train = TrainState(index=self._next_index, position=1, velocity=line.max_velocity)
        self._next_index += 1
        self.trains.append(train)
        self._last_entry_t = t
        self.log.injected += 1
        self.log.events.append(EventRecord(t, "entry", train.index))

    def _check_ordering(self, t: int) -> None:
        prev: Optional[TrainState] = None
        for tr in self.trains:
            if not (1 <= tr.position < self.config.line.length_cells):
                raise CollisionError(f"t={t}: train {tr.index} left the track "
                                     f"at cell {tr.position}")
            if not (0 <= tr.velocity <= self.config.line.max_velocity):
                raise CollisionError(f"t={t}: train {tr.index} velocity {tr.velocity} "
                                     f"out of range")
            if prev is not None and prev.position <= tr.position:
                dump = [(x.index, x.position, x.velocity) for x in self.trains]
                raise CollisionError(f"t={t}: ordering violated between trains "
                                     f"{prev.index} and {tr.index}: {dump}")
            prev = tr

    def run(self) -> TrajectoryLog:
        for t in range(1, self.config.line.horizon_s + 1):
            self.step(t)
        if self.log.injected != self.log.exited + len(self.trains):
            raise ConservationError(
                f"injected {self.log.injected} != exited {self.log.exited} "
                f"+ on-line {len(self.trains)}")
        return self.log


def run_scenario(config: ScenarioConfig) -> TrajectoryLog:
    """Run one service horizon and return the full log."""
    return Simulation(config).run()


# ---------------------------------------------------------------------------
# named scenarios

# Critical bottleneck occupancy reproducing the reference dynamics: optimum
# near 580 passenger movements per train, peak flow near 1/60 trains/s, first
# queue just after t=2100 s, and the gate-cap ladder ordering (a 9.75 pax/s cap
# still queues, a 9.65 pax/s cap runs queue-free). Obtained from
# calibrate_critical_movements sweeps over the no-control configuration plus
# the five-scenario ladder; see metrics module.
CALIBRATED_CRITICAL_MOVEMENTS = 495.0


def _base_config(critical_movements: float, **kw) -> ScenarioConfig:
    dwell = (ConstantDwell(30), ConstantDwell(30),
             BottleneckDwell(critical_movements=critical_movements))
    return ScenarioConfig(dwell_models=dwell, **kw)


def named_scenario(name: str,
                   critical_movements: float = CALIBRATED_CRITICAL_MOVEMENTS
                   ) -> ScenarioConfig:
    """Build one of the five control scenarios.

    no-control        free ramp to 10 pax/s, timetable floor 60 s
    cap-9.75          gate cap at 9.75 pax/s
    optimal-cap       gate cap at 9.65 pax/s (queue-free optimum)
    headway-control   timetable floor 90 s plus upstream dwell raised to 60 s
    combined          gate cap 9.75 pax/s plus timetable floor 70 s
    """
    base_demand = DemandRamp()
    if name == "no-control":
        return _base_config(critical_movements, name=name)
    if name == "cap-9.75":
        return _base_config(critical_movements, demand=replace(base_demand, cap=9.75),
                            name=name)
    if name == "optimal-cap":
        return _base_config(critical_movements, demand=replace(base_demand, cap=9.65),
                            name=name)
    if name == "headway-control":
        cfg = _base_config(critical_movements,
                           injection=InjectionSchedule(floor_s=90), name=name)
        dwell = (ConstantDwell(60), ConstantDwell(60), cfg.dwell_models[2])
        return replace(cfg, dwell_models=dwell)
    if name == "combined":
        return _base_config(critical_movements,
                            demand=replace(base_demand, cap=9.75),
                            injection=InjectionSchedule(floor_s=70), name=name)
    raise ValueError(f"unknown scenario {name!r}; expected one of "
                     f"{', '.join(SCENARIO_NAMES)}")


SCENARIO_NAMES = ("no-control", "cap-9.75", "optimal-cap", "headway-control", "combined")


def apply_upstream_dwell(config: ScenarioConfig, stations: Iterable[int],
                         seconds: int) -> ScenarioConfig:
    """Return a copy with the dwell at the given 0-based stations replaced."""
    chosen = set(stations)
    dwell = tuple(ConstantDwell(seconds) if i in chosen else m
                  for i, m in enumerate(config.dwell_models))
    if chosen - set(range(len(config.dwell_models))):
        raise ValueError("station index out of range")
    return replace(config, dwell_models=dwell)
