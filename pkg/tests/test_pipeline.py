"""Interval aggregation, instrument joins, and the synthetic day generator,
checked against hand-computed windows and moment targets."""

import datetime as dt

import numpy as np
import pytest
from scipy.stats import spearmanr

from metroflow.config import ConfigError
from metroflow.pipeline import (STATION_PROFILES, WINDOW_S, ArrivalRecord,
                                IntervalObservation, InstrumentedSample,
                                StationProfile, aggregate_intervals,
                                arrival_records_from_simulation,
                                build_instruments,
                                first_stage_sample_relevance,
                                generate_synthetic, parse_calendar,
                                simulate_service_days, workdays)
from metroflow.simulation import named_scenario, run_scenario


def _arr(t_s, movements=300.0, day=0, station="x", direction="down"):
    return ArrivalRecord(day=day, t_s=float(t_s), station=station,
                         direction=direction, movements=float(movements))


def test_constant_headway_window_by_hand():
    # arrivals every 120 s: the window's four usable arrivals all have
    # headway 120, so q = 600/120 = 5 trains per window
    records = [_arr(t) for t in (60, 180, 300, 420, 540)]
    obs = aggregate_intervals(records)
    assert obs == [IntervalObservation(station="x", direction="down", day=0,
                                       interval=0, q=5.0, n=300.0)]


def test_mixed_headways_average_in_flow_units():
    # headways 100 and 150 -> q = mean(6.0, 4.0) = 5.0, not 600/mean(h)
    records = [_arr(0, 100), _arr(100, 250), _arr(250, 350)]
    obs = aggregate_intervals(records)
    assert len(obs) == 1
    assert obs[0].q == pytest.approx(5.0)
    assert obs[0].n == pytest.approx(300.0)


def test_headway_reaches_back_across_windows():
    # 599 -> 601: the second window's arrival carries a 2 s headway even
    # though its predecessor landed in window 0
    records = [_arr(599), _arr(601), _arr(603)]
    obs = aggregate_intervals(records)
    assert [o.interval for o in obs] == [1]
    assert obs[0].q == pytest.approx(300.0)


def test_sparse_windows_dropped():
    # one usable arrival in window 0 (the first has no headway), none later
    assert aggregate_intervals([_arr(10), _arr(400)]) == []
    # two usable -> kept
    assert len(aggregate_intervals([_arr(10), _arr(300), _arr(590)])) == 1


def test_streams_do_not_mix():
    records = [_arr(0), _arr(300), _arr(599),
               _arr(100, station="y"), _arr(200, station="y"),
               _arr(500, station="y")]
    obs = {o.station: o for o in aggregate_intervals(records)}
    assert obs["x"].q == pytest.approx(np.mean([600 / 300, 600 / 299]))
    assert obs["y"].q == pytest.approx(np.mean([600 / 100, 600 / 300]))


def test_reaggregation_is_a_type_error():
    obs = aggregate_intervals([_arr(0), _arr(100), _arr(200)])
    with pytest.raises(TypeError, match="cannot be re-aggregated"):
        aggregate_intervals(obs)


def test_disordered_arrivals_rejected():
    with pytest.raises(ValueError, match="time-ordered"):
        aggregate_intervals([_arr(100), _arr(50)])
    with pytest.raises(ValueError, match="window_s"):
        aggregate_intervals([_arr(0)], window_s=0.0)


def test_parse_calendar_and_errors():
    dates = parse_calendar("2024-03-04\n\n2024-03-05\n")
    assert dates == [dt.date(2024, 3, 4), dt.date(2024, 3, 5)]
    with pytest.raises(ConfigError, match="line 2"):
        parse_calendar("2024-03-04\nnot-a-date")


def test_workdays_skip_weekends():
    # 2024-03-02 is a Saturday; the run starts the following Monday
    days = workdays(dt.date(2024, 3, 2), 6)
    assert days[0] == dt.date(2024, 3, 4)
    assert len(days) == 6
    assert all(d.weekday() < 5 for d in days)
    assert days[4] == dt.date(2024, 3, 8)  # Friday
    assert days[5] == dt.date(2024, 3, 11)  # next Monday


def _obs(day, interval=0, q=5.0, n=100.0):
    return IntervalObservation(station="x", direction="down", day=day,
                               interval=interval, q=q, n=n)


def test_instrument_join_previous_workday():
    # Fri, Sat, Sun, Mon: Monday's instrument is Friday's movements
    cal = [dt.date(2024, 3, 1), dt.date(2024, 3, 2), dt.date(2024, 3, 3),
           dt.date(2024, 3, 4)]
    obs = [_obs(0, n=111.0), _obs(1, n=222.0), _obs(2, n=333.0),
           _obs(3, n=444.0)]
    samples = build_instruments(obs, cal)
    # weekend observations are skipped; Friday is first and has no source
    assert samples == [InstrumentedSample(station="x", direction="down",
                                          day=3, interval=0, q=5.0, n=444.0,
                                          z=111.0)]


def test_instrument_join_needs_matching_interval():
    cal = workdays(dt.date(2024, 3, 4), 3)
    obs = [_obs(0, interval=1, n=10.0), _obs(1, interval=1, n=20.0),
           _obs(1, interval=2, n=30.0), _obs(2, interval=2, n=40.0)]
    samples = build_instruments(obs, cal)
    got = {(s.day, s.interval): s.z for s in samples}
    # day 1 interval 1 sourced from day 0; day 2 interval 2 from day 1;
    # day 1 interval 2 has no day-0 window and is dropped
    assert got == {(1, 1): 10.0, (2, 2): 30.0}


def test_instrument_join_errors():
    with pytest.raises(ConfigError, match="calendar is empty"):
        build_instruments([], [])
    weekend = [dt.date(2024, 3, 2), dt.date(2024, 3, 3)]
    with pytest.raises(ConfigError, match="two workdays"):
        build_instruments([], weekend)
    cal = workdays(dt.date(2024, 3, 4), 2)
    with pytest.raises(ConfigError, match="outside the 2-day calendar"):
        build_instruments([_obs(5)], cal)


def test_relevance_matches_spearman():
    rng = np.random.default_rng(1)
    n = rng.uniform(50, 500, 40)
    z = n * 0.8 + rng.normal(0, 30, 40)
    samples = [InstrumentedSample(station="x", direction="down", day=1,
                                  interval=i, q=5.0, n=float(a), z=float(b))
               for i, (a, b) in enumerate(zip(n, z))]
    assert first_stage_sample_relevance(samples) == pytest.approx(
        float(spearmanr(n, z).statistic))


def test_profiles_registry_and_validation():
    assert len(STATION_PROFILES) == 14
    p = STATION_PROFILES["prince-edward-down"]
    assert (p.movements_mean, p.movements_sd) == (451.50, 175.94)
    assert (p.flow_mean, p.flow_sd) == (3.34, 1.04)
    assert p.slug == "prince-edward-down"
    with pytest.raises(ValueError, match="sd must be >= 0"):
        StationProfile("s", "down", 0.3, 9.0, 3.3, 1.0, 2.0, 900.0, 450.0, -1.0)
    with pytest.raises(ValueError, match="min <= mean <= "):
        StationProfile("s", "down", 0.3, 9.0, 99.0, 1.0, 2.0, 900.0, 450.0, 1.0)


def test_synthetic_respects_bounds_and_floor():
    profile = STATION_PROFILES["lok-fu-up"]
    records = generate_synthetic(profile, days=4, seed=2)
    obs = aggregate_intervals(records)
    assert obs  # every window survives the >= 2 usable-arrival rule
    n = np.array([o.n for o in obs])
    assert n.min() >= profile.movements_min - 1e-9
    assert n.max() <= profile.movements_max + 1e-9
    q = np.array([o.q for o in obs])
    assert q.max() <= profile.flow_max + 1e-9


def test_synthetic_deterministic_and_seed_sensitive():
    profile = STATION_PROFILES["mong-kok-up"]
    a = generate_synthetic(profile, days=2, seed=7)
    b = generate_synthetic(profile, days=2, seed=7)
    c = generate_synthetic(profile, days=2, seed=8)
    assert a == b
    assert a != c
    with pytest.raises(ValueError):
        generate_synthetic(profile, days=0)


def test_synthetic_zero_sd_is_constant():
    profile = StationProfile("flat", "down", 2.5, 6.0, 4.0, 0.0,
                             100.0, 300.0, 200.0, 0.0)
    records = generate_synthetic(profile, days=2, seed=0)
    assert {r.movements for r in records} == {200.0}
    headways = {round(b.t_s - a.t_s, 9) for a, b in zip(records, records[1:])
                if b.t_s > a.t_s and b.day == a.day}
    assert headways == {WINDOW_S / 4.0}  # constant flow 4 trains/window


def test_arrival_records_from_simulation_default_station():
    log = run_scenario(named_scenario("no-control"))
    records = arrival_records_from_simulation(log, day=3)
    events = [e for e in log.events if e.kind == "arrival" and e.station == 2]
    assert len(records) == len(events)
    assert all(r.day == 3 and r.station == "sim" for r in records)
    assert [r.t_s for r in records] == [float(e.t) for e in events]
    assert [r.movements for r in records] == [float(e.movements) for e in events]


def test_simulate_service_days_scales_demand():
    base = named_scenario("no-control")
    records = simulate_service_days(base, [0.5, 1.0])
    days = {r.day for r in records}
    assert days == {0, 1}
    # higher demand -> more movements on day 1 than the half-demand day 0
    mean0 = np.mean([r.movements for r in records if r.day == 0])
    mean1 = np.mean([r.movements for r in records if r.day == 1])
    assert mean1 > mean0
    again = simulate_service_days(base, [0.5, 1.0])
    assert again == records
