"""Plain-text scenario files.

One ``key = value`` pair per line, ``#`` comments, blank lines ignored.
Every field of ScenarioConfig is addressable; unknown keys, duplicates, and
type mismatches are rejected with the offending line number. ``format_scenario``
writes a file that parses back to an equal config.

Dwell models are addressed per station index: ``dwell.<i>.type`` picks
``constant`` or ``bottleneck`` (resetting that station to the type's
defaults), then ``dwell.<i>.seconds`` or ``dwell.<i>.base_s`` /
``dwell.<i>.critical_movements`` / ``dwell.<i>.growth_s_per_pax`` adjust it.
Stations without dwell keys default to a 30 s constant stop, except the last
station which defaults to the congestion-dependent model.
"""

from __future__ import annotations

import re
from dataclasses import replace
from pathlib import Path
from typing import Union

from .simulation import (BottleneckDwell, ConstantDwell, DemandRamp,
                         InjectionSchedule, LineConfig, ScenarioConfig)


class ConfigError(ValueError):
    """Malformed scenario file; message carries the line number."""


_LINE_KEYS = {
    "line.length_cells": int,
    "line.horizon_s": int,
    "line.max_velocity": int,
    "line.acceleration": int,
    "line.deceleration": int,
    "line.safety_margin": int,
}
_DEMAND_KEYS = {
    "demand.initial": float,
    "demand.peak": float,
    "demand.increment_per_s": float,
    "demand.scale": float,
}
_INJECTION_KEYS = {
    "injection.start_s": int,
    "injection.decrement_s": int,
    "injection.period_s": int,
    "injection.floor_s": int,
}
_DWELL_FIELD_TYPES = {
    "type": str,
    "seconds": int,
    "base_s": int,
    "critical_movements": float,
    "growth_s_per_pax": float,
}
_DWELL_KEY = re.compile(r"^dwell\.(\d+)\.([a-z_]+)$")


def _parse_value(raw: str, caster, key: str, lineno: int):
    try:
        return caster(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: {key} expects {caster.__name__}, got {raw!r}") from None


def _collect_pairs(text: str) -> list[tuple[int, str, str]]:
    pairs = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not key or not raw:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in seen:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        pairs.append((lineno, key, raw))
    return pairs


def parse_scenario(text: str) -> ScenarioConfig:
    """Build a ScenarioConfig from scenario-file text."""
    pairs = _collect_pairs(text)

    line_kwargs: dict = {}
    demand_kwargs: dict = {}
    injection_kwargs: dict = {}
    top: dict = {}
    dwell_entries: list[tuple[int, int, str, str]] = []  # lineno, idx, field, raw

    for lineno, key, raw in pairs:
        if key == "name":
            top["name"] = raw
        elif key == "seed":
            top["seed"] = _parse_value(raw, int, key, lineno)
        elif key == "line.station_positions":
            try:
                positions = tuple(int(tok) for tok in raw.split(","))
            except ValueError:
                raise ConfigError(
                    f"line {lineno}: {key} expects comma-separated integers, "
                    f"got {raw!r}") from None
            line_kwargs["station_positions"] = positions
        elif key in _LINE_KEYS:
            line_kwargs[key.split(".", 1)[1]] = _parse_value(
                raw, _LINE_KEYS[key], key, lineno)
        elif key == "demand.cap":
            demand_kwargs["cap"] = (None if raw.lower() == "none"
                                    else _parse_value(raw, float, key, lineno))
        elif key in _DEMAND_KEYS:
            demand_kwargs[key.split(".", 1)[1]] = _parse_value(
                raw, _DEMAND_KEYS[key], key, lineno)
        elif key in _INJECTION_KEYS:
            injection_kwargs[key.split(".", 1)[1]] = _parse_value(
                raw, _INJECTION_KEYS[key], key, lineno)
        elif (m := _DWELL_KEY.match(key)) is not None:
            idx, fld = int(m.group(1)), m.group(2)
            if fld not in _DWELL_FIELD_TYPES:
                raise ConfigError(f"line {lineno}: unknown dwell field {fld!r}")
            dwell_entries.append((lineno, idx, fld, raw))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    def build(section: str, factory, kwargs):
        try:
            return factory(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{section}: {exc}") from None

    line = build("line", LineConfig, line_kwargs)
    demand = build("demand", DemandRamp, demand_kwargs)
    injection = build("injection", InjectionSchedule, injection_kwargs)

    n_stations = len(line.station_positions)
    models: list = [ConstantDwell(30) for _ in range(max(n_stations - 1, 0))]
    if n_stations:
        models.append(BottleneckDwell())
    for lineno, idx, fld, raw in dwell_entries:
        if not 0 <= idx < n_stations:
            raise ConfigError(
                f"line {lineno}: dwell index {idx} out of range for "
                f"{n_stations} stations")
        if fld != "type":
            continue
        if raw == "constant":
            models[idx] = ConstantDwell()
        elif raw == "bottleneck":
            models[idx] = BottleneckDwell()
        else:
            raise ConfigError(
                f"line {lineno}: dwell type must be constant or bottleneck, "
                f"got {raw!r}")
    for lineno, idx, fld, raw in dwell_entries:
        if fld == "type":
            continue
        model = models[idx]
        value = _parse_value(raw, _DWELL_FIELD_TYPES[fld], f"dwell.{idx}.{fld}", lineno)
        if isinstance(model, ConstantDwell):
            if fld != "seconds":
                raise ConfigError(
                    f"line {lineno}: dwell.{idx}.{fld} not valid for a "
                    f"constant dwell (use seconds)")
        else:
            if fld == "seconds":
                raise ConfigError(
                    f"line {lineno}: dwell.{idx}.seconds not valid for a "
                    f"bottleneck dwell")
        try:
            models[idx] = replace(model, **{fld: value})
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None

    try:
        return ScenarioConfig(line=line, dwell_models=tuple(models),
                              demand=demand, injection=injection, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def format_scenario(cfg: ScenarioConfig) -> str:
    """Scenario-file text that parses back to an equal config."""
    lines = [
        f"name = {cfg.name}",
        f"seed = {cfg.seed}",
        f"line.length_cells = {cfg.line.length_cells}",
        "line.station_positions = " + ",".join(map(str, cfg.line.station_positions)),
        f"line.horizon_s = {cfg.line.horizon_s}",
        f"line.max_velocity = {cfg.line.max_velocity}",
        f"line.acceleration = {cfg.line.acceleration}",
        f"line.deceleration = {cfg.line.deceleration}",
        f"line.safety_margin = {cfg.line.safety_margin}",
        f"demand.initial = {cfg.demand.initial!r}",
        f"demand.peak = {cfg.demand.peak!r}",
        f"demand.increment_per_s = {cfg.demand.increment_per_s!r}",
        f"demand.cap = {'none' if cfg.demand.cap is None else repr(cfg.demand.cap)}",
        f"demand.scale = {cfg.demand.scale!r}",
        f"injection.start_s = {cfg.injection.start_s}",
        f"injection.decrement_s = {cfg.injection.decrement_s}",
        f"injection.period_s = {cfg.injection.period_s}",
        f"injection.floor_s = {cfg.injection.floor_s}",
    ]
    for i, model in enumerate(cfg.dwell_models):
        if isinstance(model, ConstantDwell):
            lines.append(f"dwell.{i}.type = constant")
            lines.append(f"dwell.{i}.seconds = {model.seconds}")
        else:
            lines.append(f"dwell.{i}.type = bottleneck")
            lines.append(f"dwell.{i}.base_s = {model.base_s}")
            lines.append(f"dwell.{i}.critical_movements = {model.critical_movements!r}")
            lines.append(f"dwell.{i}.growth_s_per_pax = {model.growth_s_per_pax!r}")
    return "\n".join(lines) + "\n"
