"""
Station flow-curve estimation
=============================

Generates two months of synthetic smart-card-style data for one station,
aggregates it into 10-minute intervals, joins each workday interval with the
same interval on the previous workday to get an instrument, and fits the
train-flow vs passenger-movements curve with the Gibbs sampler.

The synthetic generator matches reference per-station moments but encodes no
dwell-time mechanism, so the fitted curve here mostly reflects how flow and
movements co-move through the service day. For the causal story, where flow
drops once movements pass the bottleneck optimum, see headway_recovery.py,
which runs the same estimation on simulator data.

Run from the repository root:  python3 demos/flow_curve_estimation.py
"""

import datetime as dt
from pathlib import Path

import numpy as np

from metroflow import (STATION_PROFILES, FAST_MCMC, NpivModelSpec,
                       aggregate_intervals, build_instruments, extract_optimum,
                       first_stage_relevance, gibbs_fit, generate_synthetic,
                       simultaneous_band, posterior_mean_curve, workdays)
from metroflow.plots import band_plot

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

profile = STATION_PROFILES["prince-edward-down"]
records = generate_synthetic(profile, days=60, seed=0)
observations = aggregate_intervals(records)
calendar = workdays(dt.date(2024, 3, 4), 60)
samples = build_instruments(observations, calendar)
print(f"{len(records)} arrivals -> {len(observations)} interval observations "
      f"-> {len(samples)} instrumented samples")

q = np.array([s.q for s in samples])
n = np.array([s.n for s in samples])
z = np.array([s.z for s in samples])

# FAST_MCMC keeps this demo around a minute; production fits use DEFAULT_MCMC
draws = gibbs_fit(q, n, z, spec=NpivModelSpec(mode="iv"), mcmc=FAST_MCMC)

relevance = first_stage_relevance(draws)
print(f"instrument rank correlation {relevance.rank_correlation:.3f}")

report = extract_optimum(draws, station=profile.station,
                         direction=profile.direction)
print(f"optimum at {report.optimum_movements:.0f} movements per train, "
      f"max flow {report.max_flow:.2f} trains/10min "
      f"(implied minimum headway {report.implied_min_headway_minutes:.2f} min)")
print(f"significant backward bend: {report.significant_backward_bend}")

band = simultaneous_band(draws, delta=0.05)
grid, mean = posterior_mean_curve(draws)
band_plot(grid, mean, band.lower, band.upper, out / "flow-curve.svg",
          scatter=(n, q), xlabel="passenger movements per train",
          ylabel="train flow (trains/10min)",
          title=f"{profile.slug}: estimated flow curve, 95% band")
print(f"figure written to {out}/flow-curve.svg")
