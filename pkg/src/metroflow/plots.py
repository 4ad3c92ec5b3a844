"""SVG figures: trajectories, flow diagrams, posterior bands, benchmark overlay.

Figures are written deterministically (fixed hash salt, no timestamp
metadata) so repeated runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "metroflow"

import matplotlib.pyplot as plt
import numpy as np

from .metrics import smoothed_flow_curve
from .simulation import TrajectoryLog

PathLike = Union[str, Path]


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def time_space_diagram(log: TrajectoryLog, path: PathLike,
                       title: Optional[str] = None) -> Path:
    """Position-vs-time trace of every train, stations as horizontal rules."""
    t, ids, x, _ = log.snapshot_arrays()
    fig, ax = plt.subplots(figsize=(8, 5))
    for train in np.unique(ids):
        mask = ids == train
        ax.plot(t[mask], x[mask], lw=0.5, color="tab:blue")
    for pos in log.config.line.station_positions:
        ax.axhline(pos, color="tab:gray", lw=0.8, ls="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("position (m)")
    ax.set_title(title or f"time-space diagram: {log.config.name}")
    return _save(fig, path)


def flow_diagram(points, path: PathLike, window: int = 11,
                 title: Optional[str] = None) -> Path:
    """Scatter of per-cycle flow points plus the smoothed curve."""
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.scatter([p.movements for p in points], [p.flow for p in points],
               s=6, alpha=0.4, color="tab:blue", label="per-cycle")
    if len(points) >= window:
        mov, flo = smoothed_flow_curve(points, window)
        ax.plot(mov, flo, color="tab:red", lw=1.6,
                label=f"moving average ({window})")
    ax.set_xlabel("passenger movements per train")
    ax.set_ylabel("train flow (trains/s)")
    ax.set_title(title or "flow vs passenger movements")
    ax.legend()
    return _save(fig, path)


def band_plot(grid: Sequence[float], mean: Sequence[float],
              lower: Sequence[float], upper: Sequence[float], path: PathLike,
              scatter: Optional[tuple[Sequence[float], Sequence[float]]] = None,
              xlabel: str = "covariate", ylabel: str = "response",
              title: Optional[str] = None) -> Path:
    """Posterior mean with its simultaneous band, optional data overlay."""
    fig, ax = plt.subplots(figsize=(7, 5))
    if scatter is not None:
        ax.scatter(scatter[0], scatter[1], s=5, alpha=0.25,
                   color="tab:gray", label="data")
    ax.fill_between(grid, lower, upper, alpha=0.3, color="tab:blue",
                    label="simultaneous band")
    ax.plot(grid, mean, color="tab:blue", lw=1.8, label="posterior mean")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def benchmark_overlay(result, path: PathLike) -> Path:
    """Every estimator's demeaned curve over the demeaned truth."""
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(result.grid, result.truth, color="black", lw=2.2, label="truth")
    for est in result.estimates:
        ax.plot(result.grid, est.curve, lw=1.4,
                label=f"{est.name} (rmse {est.rmse:.3g})")
    ax.set_xlabel("endogenous covariate")
    ax.set_ylabel("structural curve (demeaned)")
    ax.set_title(f"estimator comparison, profile {result.profile}")
    ax.legend(fontsize=8)
    return _save(fig, path)
