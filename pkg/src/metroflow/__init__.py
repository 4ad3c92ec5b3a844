"""Metro line congestion simulation and train-flow curve estimation.

Four capabilities behind one package: a cell-based single-track metro
simulator with congestion-dependent station dwell, measurement and
calibration tools over its logs, a Bayesian nonparametric instrumented
regression of train flow on passenger movements (with parametric and
non-instrumented baselines and a benchmark harness), and a data pipeline
that aggregates arrival events into instrumented ten-minute samples.
"""

__version__ = "0.1.0"

from .config import ConfigError, format_scenario, load_scenario, parse_scenario
from .metrics import (CalibrationError, EmptySeriesError, FlowPoint, PeakFlow,
                      calibrate_critical_movements, calibration_table,
                      exit_count, first_queue_time, hourly_throughput,
                      moving_average, peak_flow, queueing_detected,
                      smoothed_flow_curve, station_flow_series)
from .benchmark import (DEFAULT_NOISE_SD, FAST_PROFILE, PAPER_PROFILE, PROFILES,
                        BenchmarkProfile, BenchmarkResult, EstimatorResult,
                        generate_sample, run_monte_carlo, true_curve)
from .npiv import (DEFAULT_MCMC, FAST_MCMC, BottleneckReport, CredibleBand,
                   DegenerateDesignError, FirstStageRelevance, McmcConfig,
                   NpivModelSpec, NumericalError, PosteriorDraws,
                   extract_optimum, first_stage_relevance, gibbs_fit,
                   posterior_mean_curve, secant_slope_stats, simultaneous_band)
from .pipeline import (STATION_PROFILES, ArrivalRecord, InstrumentedSample,
                       IntervalObservation, StationProfile, aggregate_intervals,
                       arrival_records_from_simulation, build_instruments,
                       first_stage_sample_relevance, generate_synthetic,
                       parse_calendar, simulate_service_days, workdays)
from .simulation import (CALIBRATED_CRITICAL_MOVEMENTS, SCENARIO_NAMES,
                         BottleneckDwell, CollisionError, ConservationError,
                         ConstantDwell, DemandRamp, EventRecord,
                         InjectionSchedule, LineConfig, ScenarioConfig,
                         TrajectoryLog, named_scenario, run_scenario)
from .splines import (DomainError, SplineBasisSpec, basis_matrix,
                      difference_penalty, evaluation_grid, knot_vector)
from .twosls import TwoSlsFit, fit_2sls

__all__ = [name for name in dir() if not name.startswith("_")]
