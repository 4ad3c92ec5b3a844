"""CSV and manifest plumbing shared by the command-line tools.

All writers emit UTF-8 with LF line endings and a header row, so identical
inputs produce byte-identical files. Readers validate headers and report
every offending column at once.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .simulation import EventRecord, TrajectoryLog

PathLike = Union[str, Path]


class SchemaError(ValueError):
    """A CSV is missing required columns; message lists all of them."""


def _fmt(value) -> str:
    if value is None:
        return ""
    # plain float() first: numpy scalars subclass float but repr differently
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(path: PathLike, header: Sequence[str],
                rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _read_rows(path: PathLike, required: Sequence[str]) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected columns "
                              + ",".join(required))
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {','.join(missing)}; "
                              f"found {','.join(reader.fieldnames)}")
        return list(reader)


# ---------------------------------------------------------------------------
# simulation logs


def write_snapshots(path: PathLike, log: TrajectoryLog) -> Path:
    return _write_rows(path, ("t", "train", "position", "velocity"),
                       zip(log.times, log.train_ids, log.positions, log.velocities))


def write_events(path: PathLike, log: TrajectoryLog) -> Path:
    return _write_rows(
        path, ("t", "kind", "train", "station", "movements", "headway_s", "dwell_s"),
        ((e.t, e.kind, e.train, e.station, e.movements, e.headway_s, e.dwell_s)
         for e in log.events))


def read_events(path: PathLike) -> list[EventRecord]:
    rows = _read_rows(path, ("t", "kind", "train", "station", "movements",
                             "headway_s", "dwell_s"))
    def opt(raw, caster):
        return None if raw == "" else caster(raw)
    return [EventRecord(t=int(r["t"]), kind=r["kind"], train=int(r["train"]),
                        station=opt(r["station"], int),
                        movements=opt(r["movements"], float),
                        headway_s=opt(r["headway_s"], float),
                        dwell_s=opt(r["dwell_s"], lambda v: int(float(v))))
            for r in rows]


def write_flow_series(path: PathLike, points) -> Path:
    return _write_rows(path, ("t", "movements", "flow"),
                       ((p.t, p.movements, p.flow) for p in points))


def write_throughput_table(path: PathLike, rows: Sequence[dict]) -> Path:
    header = ("scenario", "exits", "hourly_throughput", "queueing_detected",
              "first_queue_t")
    return _write_rows(path, header,
                       ((r["scenario"], r["exits"], r["hourly_throughput"],
                         r["queueing_detected"], r["first_queue_t"]) for r in rows))


# ---------------------------------------------------------------------------
# estimation data


def write_samples(path: PathLike, q, n, z=None) -> Path:
    q = np.asarray(q, dtype=float)
    n = np.asarray(n, dtype=float)
    if z is None:
        return _write_rows(path, ("q", "n"), zip(q, n))
    z = np.asarray(z, dtype=float)
    return _write_rows(path, ("q", "n", "z"), zip(q, n, z))


def read_samples(path: PathLike, require_instrument: bool
                 ) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    required = ("q", "n", "z") if require_instrument else ("q", "n")
    rows = _read_rows(path, required)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    q = np.array([float(r["q"]) for r in rows])
    n = np.array([float(r["n"]) for r in rows])
    z = None
    if require_instrument:
        z = np.array([float(r["z"]) for r in rows])
    return q, n, z


def write_curve(path: PathLike, grid, mean, lower, upper) -> Path:
    return _write_rows(path, ("grid", "mean", "lower", "upper"),
                       zip(grid, mean, lower, upper))


def write_benchmark_table(path: PathLike, rmse_table: dict[str, float]) -> Path:
    return _write_rows(path, ("estimator", "rmse"), rmse_table.items())


# ---------------------------------------------------------------------------
# pipeline records


def write_arrivals(path: PathLike, records) -> Path:
    return _write_rows(path, ("day", "t_s", "station", "direction", "movements"),
                       ((r.day, r.t_s, r.station, r.direction, r.movements)
                        for r in records))


def read_arrivals(path: PathLike):
    from .pipeline import ArrivalRecord
    rows = _read_rows(path, ("day", "t_s", "station", "direction", "movements"))
    return [ArrivalRecord(day=int(r["day"]), t_s=float(r["t_s"]),
                          station=r["station"], direction=r["direction"],
                          movements=float(r["movements"])) for r in rows]


def write_intervals(path: PathLike, observations) -> Path:
    return _write_rows(path, ("station", "direction", "day", "interval", "q", "n"),
                       ((o.station, o.direction, o.day, o.interval, o.q, o.n)
                        for o in observations))


def write_instrumented(path: PathLike, samples) -> Path:
    return _write_rows(path, ("station", "direction", "day", "interval",
                              "q", "n", "z"),
                       ((s.station, s.direction, s.day, s.interval, s.q, s.n, s.z)
                        for s in samples))


# ---------------------------------------------------------------------------
# run manifests


def sha256_of(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Provenance record written next to every output set."""

    command: list[str]
    tool_version: str
    seed: Optional[int] = None
    config_path: Optional[str] = None
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: list[str] = field(default_factory=list)

    def add_input(self, path: PathLike) -> None:
        self.inputs[str(path)] = sha256_of(path)

    def add_output(self, path: PathLike) -> None:
        self.outputs.append(str(path))

    def write(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"command": self.command, "tool_version": self.tool_version,
                   "seed": self.seed, "config_path": self.config_path,
                   "inputs": self.inputs, "outputs": sorted(self.outputs)}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path
