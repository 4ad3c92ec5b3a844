"""Command-line front end.

Four subcommands: ``simulate`` runs control scenarios and writes trajectory,
metric, and figure files; ``estimate`` fits the flow-vs-movements curve from
a samples CSV; ``benchmark`` runs the estimator comparison study;
``pipeline`` turns arrival events (real or synthetic) into instrumented
interval samples. Every command writes a manifest.json recording inputs,
their hashes, and outputs, and is deterministic given its flags.

Exit codes: 0 success, 2 usage or configuration error, 1 internal or
numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__, dataio, metrics, plots
from .config import ConfigError, load_scenario
from .dataio import RunManifest, SchemaError
from .npiv import (DegenerateDesignError, McmcConfig, NpivModelSpec,
                   NumericalError, extract_optimum, first_stage_relevance,
                   gibbs_fit, posterior_mean_curve, simultaneous_band)
from .simulation import (SCENARIO_NAMES, CollisionError, ConservationError,
                         named_scenario, run_scenario)

USAGE_ERROR = 2
INTERNAL_ERROR = 1


def _manifest(args_list: list[str], seed: Optional[int] = None,
              config_path: Optional[str] = None) -> RunManifest:
    return RunManifest(command=["metroflow", *args_list], tool_version=__version__,
                       seed=seed, config_path=config_path)


# ---------------------------------------------------------------------------
# simulate


def _simulate_one(source: tuple[str, str], out_dir: str) -> dict:
    """Run one scenario (named or from file) and write its file set."""
    kind, value = source
    cfg = named_scenario(value) if kind == "named" else load_scenario(value)
    log = run_scenario(cfg)
    out = Path(out_dir)
    prefix = cfg.name
    written = [
        dataio.write_snapshots(out / f"{prefix}-snapshots.csv", log),
        dataio.write_events(out / f"{prefix}-events.csv", log),
    ]
    try:
        points = metrics.station_flow_series(log)
    except metrics.EmptySeriesError:
        points = []
    written.append(dataio.write_flow_series(out / f"{prefix}-flow.csv", points))
    written.append(plots.time_space_diagram(log, out / f"{prefix}-timespace.svg"))
    written.append(plots.flow_diagram(points, out / f"{prefix}-flow.svg",
                                      title=f"flow vs movements: {prefix}"))
    row = {"scenario": prefix, "exits": log.exited,
           "hourly_throughput": metrics.hourly_throughput(log),
           "queueing_detected": metrics.queueing_detected(log),
           "first_queue_t": metrics.first_queue_time(log)}
    return {"row": row, "written": [str(p) for p in written]}


def cmd_simulate(args: argparse.Namespace, argv: list[str]) -> int:
    sources = [("named", name) for name in args.scenario]
    if args.config is not None:
        if not Path(args.config).exists():
            print(f"error: config file not found: {args.config}", file=sys.stderr)
            return USAGE_ERROR
        sources.append(("config", args.config))
    if not sources:
        print("error: need --scenario and/or --config", file=sys.stderr)
        return USAGE_ERROR

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and len(sources) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, sources,
                                    [str(out)] * len(sources)))
    else:
        results = [_simulate_one(s, str(out)) for s in sources]

    manifest = _manifest(argv, config_path=args.config)
    if args.config is not None:
        manifest.add_input(args.config)
    rows = [r["row"] for r in results]
    table = dataio.write_throughput_table(out / "throughput.csv", rows)
    manifest.add_output(table)
    for r in results:
        for p in r["written"]:
            manifest.add_output(p)
    manifest.write(out / "manifest.json")
    for row in rows:
        print(f"{row['scenario']}: throughput {row['hourly_throughput']:.1f} "
              f"trains/h, queueing {'yes' if row['queueing_detected'] else 'no'}")
    return 0


# ---------------------------------------------------------------------------
# estimate


def cmd_estimate(args: argparse.Namespace, argv: list[str]) -> int:
    mode = args.mode
    q, n, z = dataio.read_samples(args.samples, require_instrument=(mode == "iv"))
    mcmc = McmcConfig(total_draws=args.draws, burn_in=args.burn,
                      thin=args.thin, seed=args.seed)
    draws = gibbs_fit(q, n, z, spec=NpivModelSpec(mode=mode), mcmc=mcmc)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(argv, seed=args.seed)
    manifest.add_input(args.samples)

    report = extract_optimum(draws, delta=args.delta,
                             interval_minutes=args.interval_minutes,
                             station=args.station, direction=args.direction)
    payload = report.as_dict()
    payload.update(mode=mode, retained=draws.retained,
                   total_draws=mcmc.total_draws, burn_in=mcmc.burn_in,
                   thin=mcmc.thin, seed=mcmc.seed)

    curves = [("outcome", "outcome-curve.csv")]
    if mode == "iv":
        curves += [("first_stage", "first-stage-curve.csv"),
                   ("control", "control-curve.csv")]
        relevance = first_stage_relevance(draws, delta=args.delta)
        payload["instrument_rank_correlation"] = relevance.rank_correlation
        payload["first_stage_secant_slope"] = relevance.secant_slope
    for which, filename in curves:
        band = simultaneous_band(draws, delta=args.delta, which=which)
        _, mean = posterior_mean_curve(draws, which=which)
        manifest.add_output(dataio.write_curve(out / filename, band.grid,
                                               mean, band.lower, band.upper))
        if which == "outcome":
            manifest.add_output(plots.band_plot(
                band.grid, mean, band.lower, band.upper,
                out / "outcome-curve.svg", scatter=(n, q),
                xlabel="passenger movements per train",
                ylabel="train flow (trains/10min)",
                title=f"estimated flow curve ({mode})"))

    report_path = out / "report.json"
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    manifest.add_output(report_path)
    manifest.write(out / "manifest.json")
    print(f"optimum movements {report.optimum_movements:.1f}, max flow "
          f"{report.max_flow:.3f}, implied min headway "
          f"{report.implied_min_headway_minutes:.2f} min "
          f"({draws.retained} retained draws)")
    return 0


# ---------------------------------------------------------------------------
# benchmark


def cmd_benchmark(args: argparse.Namespace, argv: list[str]) -> int:
    from .benchmark import PROFILES, run_monte_carlo

    profile = PROFILES[args.profile]
    result = run_monte_carlo(seed=args.seed, profile=profile)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(argv, seed=args.seed)
    table = dict(result.rmse_table())
    manifest.add_output(dataio.write_benchmark_table(out / "rmse.csv", table))
    manifest.add_output(plots.benchmark_overlay(result, out / "overlay.svg"))
    manifest.write(out / "manifest.json")
    for name, rmse in table.items():
        print(f"{name}: rmse {rmse:.4f}")
    npiv, np_, quad = (table["bayes-npiv"], table["bayes-np"],
                       table["2sls-quadratic"])
    print(f"ordering npiv < np: {'ok' if npiv < np_ else 'violated'}")
    print(f"ordering npiv < 2sls-quadratic: {'ok' if npiv < quad else 'violated'}")
    return 0


# ---------------------------------------------------------------------------
# pipeline


def cmd_pipeline(args: argparse.Namespace, argv: list[str]) -> int:
    from . import pipeline

    if (args.events is None) == (args.synthetic is None):
        print("error: exactly one of --events or --synthetic is required",
              file=sys.stderr)
        return USAGE_ERROR
    if args.calendar is None:
        print("error: --calendar is required", file=sys.stderr)
        return USAGE_ERROR
    if not Path(args.calendar).exists():
        print(f"error: calendar file not found: {args.calendar}", file=sys.stderr)
        return USAGE_ERROR

    manifest = _manifest(argv, seed=args.seed)
    manifest.add_input(args.calendar)
    calendar = pipeline.parse_calendar(
        Path(args.calendar).read_text(encoding="utf-8"))

    if args.synthetic is not None:
        if args.synthetic not in pipeline.STATION_PROFILES:
            print(f"error: unknown station profile {args.synthetic!r}; known: "
                  + ", ".join(sorted(pipeline.STATION_PROFILES)), file=sys.stderr)
            return USAGE_ERROR
        profile = pipeline.STATION_PROFILES[args.synthetic]
        records = pipeline.generate_synthetic(profile, days=args.days,
                                              seed=args.seed)
    else:
        if not Path(args.events).exists():
            print(f"error: events file not found: {args.events}", file=sys.stderr)
            return USAGE_ERROR
        manifest.add_input(args.events)
        records = _load_arrival_records(args.events)

    observations = pipeline.aggregate_intervals(records)
    samples = pipeline.build_instruments(observations, calendar)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.add_output(dataio.write_intervals(out / "intervals.csv", observations))
    manifest.add_output(dataio.write_instrumented(out / "instruments.csv", samples))
    manifest.write(out / "manifest.json")
    print(f"{len(observations)} interval observations, "
          f"{len(samples)} instrumented samples")
    return 0


def _load_arrival_records(path: str):
    """Arrivals CSV, or a simulate events CSV (adapted as day 0, downward)."""
    from .pipeline import ArrivalRecord

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if "kind" in header:
        events = dataio.read_events(path)
        stations = {e.station for e in events if e.kind == "arrival"}
        if not stations:
            return []
        bottleneck = max(s for s in stations if s is not None)
        return [ArrivalRecord(day=0, t_s=float(e.t), station="sim",
                              direction="down", movements=float(e.movements))
                for e in events if e.kind == "arrival" and e.station == bottleneck]
    return dataio.read_arrivals(path)


# ---------------------------------------------------------------------------
# parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metroflow",
        description="metro-line congestion simulator and flow-curve estimator")
    parser.add_argument("--version", action="version",
                        version=f"metroflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run control scenarios")
    p_sim.add_argument("--scenario", action="append", default=[],
                       choices=SCENARIO_NAMES, help="named scenario (repeatable)")
    p_sim.add_argument("--config", help="scenario file (key = value lines)")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for multi-scenario runs")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="fit the flow-vs-movements curve")
    p_est.add_argument("--samples", required=True,
                       help="CSV with columns q,n and, for --mode iv, z")
    p_est.add_argument("--mode", choices=("iv", "noniv"), default="iv")
    p_est.add_argument("--draws", type=int, default=50_000)
    p_est.add_argument("--burn", type=int, default=15_000)
    p_est.add_argument("--thin", type=int, default=10)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--delta", type=float, default=0.05,
                       help="simultaneous band level")
    p_est.add_argument("--interval-minutes", type=float, default=10.0)
    p_est.add_argument("--station", default="")
    p_est.add_argument("--direction", default="")
    p_est.add_argument("--out", required=True)
    p_est.set_defaults(func=cmd_estimate)

    p_bench = sub.add_parser("benchmark", help="estimator comparison study")
    p_bench.add_argument("--profile", choices=("fast", "paper"), default="fast")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=cmd_benchmark)

    p_pipe = sub.add_parser("pipeline",
                            help="aggregate arrivals into instrumented samples")
    p_pipe.add_argument("--events", help="arrivals CSV or simulate events CSV")
    p_pipe.add_argument("--synthetic", help="station profile slug")
    p_pipe.add_argument("--days", type=int, default=60)
    p_pipe.add_argument("--seed", type=int, default=0)
    p_pipe.add_argument("--calendar", help="newline-delimited ISO date file")
    p_pipe.add_argument("--out", required=True)
    p_pipe.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, list(argv))
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (NumericalError, DegenerateDesignError, CollisionError,
            ConservationError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return INTERNAL_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
