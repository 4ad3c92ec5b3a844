"""Metric checks on hand-built event streams plus calibration behavior."""

import numpy as np
import pytest

from metroflow import metrics
from metroflow.simulation import (EventRecord, LineConfig, ScenarioConfig,
                                  TrajectoryLog, named_scenario)


def _synthetic_log(flows, movements, station=2):
    log = TrajectoryLog(named_scenario("no-control"))
    log.events.append(EventRecord(10, "arrival", 1, station=station,
                                  movements=5.0, headway_s=100.0, dwell_s=40))
    t = 10
    for k, (f, m) in enumerate(zip(flows, movements), start=2):
        t += int(1.0 / f) + 1
        log.events.append(EventRecord(t, "arrival", k, station=station,
                                      movements=m, headway_s=1.0 / f, dwell_s=40))
    return log


def test_moving_average_frozen():
    np.testing.assert_allclose(metrics.moving_average([1, 2, 3, 4, 5], 3), [2, 3, 4])
    np.testing.assert_allclose(metrics.moving_average([7.0], 1), [7.0])
    with pytest.raises(ValueError):
        metrics.moving_average([1, 2, 3], 2)
    with pytest.raises(ValueError):
        metrics.moving_average([1, 2, 3], 0)
    with pytest.raises(ValueError):
        metrics.moving_average([1, 2], 3)
    with pytest.raises(ValueError):
        metrics.moving_average(np.ones((2, 2)), 1)


def test_station_flow_series_skips_timetable_headway():
    flows = [1.0, 0.5, 0.25]
    movements = [10.0, 20.0, 30.0]
    log = _synthetic_log(flows, movements)
    pts = metrics.station_flow_series(log)
    assert [p.flow for p in pts] == pytest.approx(flows)
    assert [p.movements for p in pts] == movements
    all_pts = metrics.station_flow_series(log, skip_first=False)
    assert len(all_pts) == 4 and all_pts[0].flow == pytest.approx(0.01)
    with pytest.raises(ValueError):
        metrics.station_flow_series(log, station=5)


def test_flow_series_needs_two_arrivals():
    log = _synthetic_log([1.0], [10.0])
    # no arrivals at station 0, exactly one at station 2 in the 1-flow log
    with pytest.raises(metrics.EmptySeriesError):
        metrics.station_flow_series(log, station=0)
    single = _synthetic_log([], [])
    with pytest.raises(metrics.EmptySeriesError):
        metrics.station_flow_series(single)
    # two arrivals: exactly one measurable headway
    two = _synthetic_log([1.0 / 60.0], [9.65 * 60.0])
    (pt,) = metrics.station_flow_series(two)
    assert pt.flow == pytest.approx(1.0 / 60.0)
    assert pt.movements == pytest.approx(579.0)


def test_peak_of_smoothed_curve():
    # window 11 over a 13-point tent: middle window wins, mean(20..120) = 70
    flows = [1, 2, 3, 4, 5, 6, 7, 6, 5, 4, 3, 2, 1]
    movements = [10.0 * k for k in range(1, 14)]
    log = _synthetic_log(flows, movements)
    pk = metrics.peak_flow(log)
    assert pk.flow == pytest.approx(47 / 11)
    assert pk.movements == pytest.approx(70.0)
    mov, flo = metrics.smoothed_flow_curve(metrics.station_flow_series(log))
    assert len(mov) == len(flo) == 3
    np.testing.assert_allclose(flo, [46 / 11, 47 / 11, 46 / 11])


def test_queue_detection_ignores_station_stops():
    log = TrajectoryLog(named_scenario("no-control"))
    log.times = [5, 6, 7]
    log.positions = [1000, 999, 500]
    log.velocities = [0, 0, 3]
    assert metrics.first_queue_time(log) == 6
    assert metrics.queueing_detected(log)
    quiet = TrajectoryLog(named_scenario("no-control"))
    quiet.times, quiet.positions, quiet.velocities = [1, 2], [2000, 1500], [0, 12]
    assert metrics.first_queue_time(quiet) is None
    assert not metrics.queueing_detected(quiet)


def _log_with_exits(times, horizon_s=3600):
    log = TrajectoryLog(ScenarioConfig(line=LineConfig(horizon_s=horizon_s)))
    for k, t in enumerate(times):
        log.events.append(EventRecord(t, "exit", k))
    log.exited = len(times)
    return log


def test_hourly_throughput_scales_with_horizon():
    assert metrics.hourly_throughput(_log_with_exits([])) == 0.0
    log = _log_with_exits(list(range(90, 3510, 90)))  # 38 exits
    assert metrics.hourly_throughput(log) == 38.0
    short = _log_with_exits(list(range(150, 1650, 150)), horizon_s=1800)  # 10
    assert metrics.hourly_throughput(short) == 20.0
    # restricting the horizon rescales by the window actually observed
    assert metrics.hourly_throughput(log, horizon_s=1800) == \
        metrics.exit_count(log, 0, 1800) * 2.0
    with pytest.raises(ValueError):
        metrics.hourly_throughput(log, horizon_s=0)


def test_throughput_additivity_over_disjoint_windows(no_control_log):
    horizon = no_control_log.config.line.horizon_s
    total = metrics.exit_count(no_control_log, 0, horizon)
    assert total == no_control_log.exited
    edges = [0, 500, 1200, 2000, 2900, horizon]
    parts = [metrics.exit_count(no_control_log, a, b)
             for a, b in zip(edges, edges[1:])]
    assert sum(parts) == total
    assert metrics.hourly_throughput(no_control_log) == total * 3600.0 / horizon
    with pytest.raises(ValueError):
        metrics.exit_count(no_control_log, 100, 100)


def test_real_run_peak_is_plausible(no_control_log):
    pk = metrics.peak_flow(no_control_log)
    assert 0.010 < pk.flow < 0.020
    assert 400 < pk.movements < 700
    assert metrics.queueing_detected(no_control_log)


def test_calibration_table_matches_direct_measurement(no_control_log):
    rows = metrics.calibration_table([495.0])
    assert len(rows) == 1
    row = rows[0]
    pk = metrics.peak_flow(no_control_log)
    assert row.critical_movements == 495.0
    assert row.peak_flow == pytest.approx(pk.flow)
    assert row.peak_movements == pytest.approx(pk.movements)
    assert row.first_queue_t == metrics.first_queue_time(no_control_log)
    assert row.hourly_throughput == metrics.hourly_throughput(no_control_log)


def test_calibrate_selects_flow_consistent_threshold():
    chosen = metrics.calibrate_critical_movements(target_flow=1.0 / 60.0)
    assert chosen == 500.0


def test_calibrate_error_paths():
    with pytest.raises(ValueError):
        metrics.calibrate_critical_movements(candidates=())
    with pytest.raises(metrics.CalibrationError):
        metrics.calibrate_critical_movements(candidates=[495.0], target_flow=1.0)
