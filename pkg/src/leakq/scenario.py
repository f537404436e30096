"""Scenario files: flat INI text describing queue, sources, and run sizing.

Grammar (all keys lower-case; '#' and ';' start comments):

    [queue]
    capacity_wh       = 40000        # or "inf"
    leakage_per_day   = 0.20         # preferred form, converted per slot
    gamma             = 0.0093       # optional per-slot form
    initial_charge_wh = 20000
    slot_hours        = 1

    [supply]
    type = gaussian | wind | trace | none
    # gaussian: mean_wh, std_wh
    # wind:     rated_power_kw, cut_in_ms, rated_speed_ms, cut_out_ms,
    #           swept_area_m2, efficiency, weibull_scale_ms, weibull_shape
    # trace:    path, column (name or index, optional), loop (true/false)

    [demand]
    type = constant | const_plus_exp | trace | none
    # constant:       base_wh
    # const_plus_exp: base_wh, exp_mean_wh
    # trace:          path, column, loop

    [simulation]
    slots = 500000
    replications = 20
    warmup = 10000        # optional; engine default otherwise
    seed = 42

When the leakage is given both per day and per slot the two must agree
to 1e-6; on conflict the per-day value wins and a warning is recorded.
A gaussian supply with no demand section models the net charge directly
and may go negative.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .approx import MgfSpec
from .dynamics import QueueConfig, daily_to_slot_leakage
from .engine import SimPlan
from .sources import (
    ConstPlusExpDemand,
    DeltaMoments,
    GaussianChargeModel,
    SupplyMinusDemand,
    TraceCharge,
    WeibullWind,
    WindSupplyModel,
    WindTurbineParams,
    load_trace,
)

__all__ = ["Scenario", "ScenarioError", "parse_scenario"]


class ScenarioError(ValueError):
    """Scenario file rejected; the message carries file and line context."""


@dataclass
class Scenario:
    """Validated scenario: queue config, net-charge source, run sizing."""

    path: Path
    config: QueueConfig
    source: object
    n_slots: int
    n_replications: int
    warmup_slots: Optional[int]
    seed: int
    leakage_per_day: Optional[float] = None
    warnings: list[str] = field(default_factory=list)

    def plan(self, seed: Optional[int] = None, config: Optional[QueueConfig] = None) -> SimPlan:
        return SimPlan(
            config=config if config is not None else self.config,
            source=self.source,
            n_slots=self.n_slots,
            n_replications=self.n_replications,
            warmup_slots=self.warmup_slots,
            master_seed=self.seed if seed is None else seed,
        )

    def delta_moments(self) -> DeltaMoments:
        return self.source.moments()

    def mgf_spec(self) -> MgfSpec:
        return MgfSpec.from_model(self.source)

    def with_config(self, config: QueueConfig) -> "Scenario":
        return Scenario(
            self.path,
            config,
            self.source,
            self.n_slots,
            self.n_replications,
            self.warmup_slots,
            self.seed,
            self.leakage_per_day,
            list(self.warnings),
        )


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    """Best-effort line number of a key (or section header) for messages."""
    in_section = False
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip().lower()
        if stripped.startswith("["):
            if key is None and stripped == f"[{section}]":
                return i
            in_section = stripped == f"[{section}]"
        elif key is not None and in_section and stripped.startswith(key):
            after = stripped[len(key):].lstrip()
            if after.startswith("=") or after.startswith(":"):
                return i
    return 0


class _SectionReader:
    def __init__(self, parser: configparser.ConfigParser, text: str, path: Path, name: str):
        self._parser = parser
        self._text = text
        self._path = path
        self.name = name

    def _fail(self, key: Optional[str], message: str) -> ScenarioError:
        line = _line_of(self._text, self.name, key)
        where = f"{self._path}:{line}" if line else f"{self._path} [{self.name}]"
        return ScenarioError(f"{where}: {message}")

    def has(self, key: str) -> bool:
        return self._parser.has_option(self.name, key)

    def raw(self, key: str, default: Optional[str] = None) -> Optional[str]:
        if not self.has(key):
            return default
        return self._parser.get(self.name, key).strip()

    def number(self, key: str, default: Optional[float] = None) -> Optional[float]:
        raw = self.raw(key)
        if raw is None:
            if default is not None:
                return default
            raise self._fail(None, f"missing required key {key!r}")
        if raw.lower() in ("inf", "infinite", "infinity"):
            return math.inf
        try:
            return float(raw)
        except ValueError:
            raise self._fail(key, f"{key} must be a number, got {raw!r}") from None

    def integer(self, key: str, default: Optional[int] = None) -> Optional[int]:
        raw = self.raw(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise self._fail(key, f"{key} must be an integer, got {raw!r}") from None

    def flag(self, key: str, default: bool = False) -> bool:
        raw = self.raw(key)
        if raw is None:
            return default
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise self._fail(key, f"{key} must be a boolean, got {raw!r}")


def _build_supply(sec: _SectionReader, base_dir: Path, slot_hours: float):
    kind = (sec.raw("type") or "none").lower()
    if kind == "none":
        return None
    if kind == "gaussian":
        return GaussianChargeModel(sec.number("mean_wh"), sec.number("std_wh"))
    if kind == "wind":
        turbine = WindTurbineParams(
            rated_power_kw=sec.number("rated_power_kw"),
            cut_in_ms=sec.number("cut_in_ms"),
            rated_speed_ms=sec.number("rated_speed_ms"),
            cut_out_ms=sec.number("cut_out_ms"),
            swept_area_m2=sec.number("swept_area_m2"),
            efficiency=sec.number("efficiency"),
        )
        wind = WeibullWind(sec.number("weibull_scale_ms"), sec.number("weibull_shape"))
        return WindSupplyModel(turbine, wind, slot_hours)
    if kind == "trace":
        return _load_trace(sec, base_dir)
    raise sec._fail("type", f"unknown supply type {kind!r}")


def _build_demand(sec: Optional[_SectionReader], base_dir: Path):
    if sec is None:
        return None
    kind = (sec.raw("type") or "none").lower()
    if kind == "none":
        return None
    if kind == "constant":
        return ConstPlusExpDemand(sec.number("base_wh"), 0.0)
    if kind == "const_plus_exp":
        return ConstPlusExpDemand(sec.number("base_wh"), sec.number("exp_mean_wh"))
    if kind == "trace":
        return _load_trace(sec, base_dir)
    raise sec._fail("type", f"unknown demand type {kind!r}")


def _load_trace(sec: _SectionReader, base_dir: Path) -> TraceCharge:
    raw_path = sec.raw("path")
    if raw_path is None:
        raise sec._fail(None, "trace source needs a 'path' key")
    trace_path = Path(raw_path)
    if not trace_path.is_absolute():
        trace_path = base_dir / trace_path
    column = sec.raw("column")
    if column is not None and column.lstrip("-").isdigit():
        column = int(column)
    try:
        trace = load_trace(trace_path, column=column, loop=sec.flag("loop", False))
    except (OSError, ValueError) as exc:
        raise sec._fail("path", str(exc)) from exc
    return TraceCharge(trace)


def parse_scenario(path) -> Scenario:
    """Parse and validate a scenario file.

    Raises ScenarioError with a file:line location for syntax errors,
    missing keys, and inconsistent values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc}") from exc

    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        where = f"{path}:{line}" if line else str(path)
        raise ScenarioError(f"{where}: {exc.message}") from exc

    for required in ("queue", "simulation"):
        if not parser.has_section(required):
            raise ScenarioError(f"{path}: missing required section [{required}]")

    queue = _SectionReader(parser, text, path, "queue")
    sim = _SectionReader(parser, text, path, "simulation")
    warnings: list[str] = []

    slot_hours = queue.number("slot_hours", 1.0)
    per_day = queue.number("leakage_per_day") if queue.has("leakage_per_day") else None
    per_slot = queue.number("gamma") if queue.has("gamma") else None
    if per_day is None and per_slot is None:
        raise queue._fail(None, "give the leakage as leakage_per_day or gamma")
    if per_day is not None:
        try:
            gamma = daily_to_slot_leakage(per_day, round(24.0 / slot_hours))
        except ValueError as exc:
            raise queue._fail("leakage_per_day", str(exc)) from exc
        if per_slot is not None and abs(gamma - per_slot) > 1e-6:
            warnings.append(
                f"leakage_per_day={per_day} implies gamma={gamma:.6g}, which "
                f"disagrees with gamma={per_slot}; using the per-day value"
            )
    else:
        gamma = per_slot

    try:
        config = QueueConfig(
            capacity_wh=queue.number("capacity_wh"),
            gamma=gamma,
            initial_charge_wh=queue.number("initial_charge_wh", 0.0),
            slot_hours=slot_hours,
        )
    except ValueError as exc:
        raise queue._fail(None, str(exc)) from exc

    base_dir = path.parent
    supply_sec = (
        _SectionReader(parser, text, path, "supply") if parser.has_section("supply") else None
    )
    demand_sec = (
        _SectionReader(parser, text, path, "demand") if parser.has_section("demand") else None
    )
    supply = _build_supply(supply_sec, base_dir, slot_hours) if supply_sec else None
    demand = _build_demand(demand_sec, base_dir)

    if supply is None and demand is None:
        raise ScenarioError(f"{path}: scenario needs a supply and/or demand section")
    if supply is None:
        raise ScenarioError(f"{path}: a demand without supply is not a runnable scenario")
    source = supply if demand is None else SupplyMinusDemand(supply, demand)

    n_slots = sim.integer("slots")
    if n_slots is None:
        raise sim._fail(None, "missing required key 'slots'")
    n_replications = sim.integer("replications", 20)
    warmup = sim.integer("warmup", None)
    seed = sim.integer("seed", 0)

    scenario = Scenario(
        path=path,
        config=config,
        source=source,
        n_slots=n_slots,
        n_replications=n_replications,
        warmup_slots=warmup,
        seed=seed,
        leakage_per_day=per_day,
        warnings=warnings,
    )
    try:
        scenario.plan()
    except ValueError as exc:
        raise ScenarioError(f"{path}: [simulation] {exc}") from exc
    return scenario
