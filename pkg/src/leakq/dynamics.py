"""Exact discrete-time dynamics of the leakage queue.

The storage model is a finite buffer whose content shrinks by a fixed
factor (1 - gamma) every slot before the slot's net charge is applied:

    B(n) = min{ [(1 - gamma) * B(n-1) + delta(n)]^+, C }

Overflow is supply wasted at a full store, underflow is demand lost at an
empty store.  This module holds the slot recursion, the equivalent
non-recursive min-max/max-min expressions used as verification oracles,
the mirrored (dual) system in which the roles of overflow and underflow
are swapped, and the unconstrained linear reference system.

All energies are in Wh as double-precision floats; the slot length is
carried only for unit conversion and reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "QueueConfig",
    "SlotRecord",
    "SlotPath",
    "ChargingConstraints",
    "step",
    "simulate_path",
    "backlog_minmax",
    "backlog_dual_form",
    "dual_transform",
    "reference_path",
    "effective_net_charge",
    "daily_to_slot_leakage",
]


@dataclass(frozen=True)
class QueueConfig:
    """Physical parameters of one leakage queue.

    capacity_wh may be math.inf for an unbounded store.  gamma is the
    per-slot self-discharge ratio; the complement (1 - gamma) is derived,
    never stored.
    """

    capacity_wh: float
    gamma: float
    initial_charge_wh: float = 0.0
    slot_hours: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if math.isnan(self.capacity_wh) or self.capacity_wh < 0.0:
            raise ValueError(f"capacity_wh must be >= 0, got {self.capacity_wh}")
        if not 0.0 <= self.initial_charge_wh <= self.capacity_wh:
            raise ValueError(
                f"initial_charge_wh must lie in [0, capacity], got "
                f"{self.initial_charge_wh} with capacity {self.capacity_wh}"
            )
        if not self.slot_hours > 0.0:
            raise ValueError(f"slot_hours must be > 0, got {self.slot_hours}")

    @property
    def gamma_bar(self) -> float:
        return 1.0 - self.gamma


@dataclass(frozen=True)
class SlotRecord:
    """State of the queue after one slot: content, waste, loss, net charge."""

    stored_wh: float
    overflow_wh: float
    underflow_wh: float
    net_charge_wh: float


@dataclass(frozen=True)
class SlotPath:
    """A simulated trajectory; records[i] is the state after slot i+1."""

    config: QueueConfig
    records: tuple[SlotRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def stored(self) -> np.ndarray:
        return np.array([r.stored_wh for r in self.records])

    def overflows(self) -> np.ndarray:
        return np.array([r.overflow_wh for r in self.records])

    def underflows(self) -> np.ndarray:
        return np.array([r.underflow_wh for r in self.records])


@dataclass(frozen=True)
class ChargingConstraints:
    """Depth-of-discharge, rate, and efficiency limits of a physical store."""

    depth_of_discharge: float
    charge_rate_wh: float
    discharge_rate_wh: float
    efficiency: float

    def __post_init__(self) -> None:
        if not 0.0 < self.depth_of_discharge <= 1.0:
            raise ValueError("depth_of_discharge must be in (0, 1]")
        if self.charge_rate_wh <= 0.0 or self.discharge_rate_wh <= 0.0:
            raise ValueError("charge and discharge rates must be > 0")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")


def step(prev_stored: float, net_charge: float, config: QueueConfig) -> SlotRecord:
    """Advance the queue one slot.

    Returns the new content together with the slot's overflow and
    underflow.  The balance

        (1 - gamma) * prev + delta == stored + overflow - underflow

    holds exactly (a single rounding applies to each side).
    """
    if not math.isfinite(prev_stored) or not math.isfinite(net_charge):
        raise ValueError("prev_stored and net_charge must be finite")
    if not 0.0 <= prev_stored <= config.capacity_wh:
        raise ValueError(
            f"prev_stored {prev_stored} outside [0, {config.capacity_wh}]"
        )
    inner = config.gamma_bar * prev_stored + net_charge
    stored = min(max(inner, 0.0), config.capacity_wh)
    overflow = max(inner - config.capacity_wh, 0.0)
    underflow = max(-inner, 0.0)
    return SlotRecord(stored, overflow, underflow, net_charge)


def simulate_path(config: QueueConfig, net_charges: Sequence[float]) -> SlotPath:
    """Run the slot recursion over a net-charge sequence.

    An empty sequence yields an empty (but valid) path.
    """
    records = []
    b = config.initial_charge_wh
    for delta in net_charges:
        rec = step(b, float(delta), config)
        records.append(rec)
        b = rec.stored_wh
    return SlotPath(config, tuple(records))


def _discounted_partial_sums(net_charges: np.ndarray, gamma_bar: float, n: int) -> np.ndarray:
    """delta_sums[j] = sum_{k=j+1..n} delta(k) * gamma_bar^(n-k), for j = 0..n."""
    out = np.zeros(n + 1)
    acc = 0.0
    # walk j from n down to 0; entering j adds slot j+1's contribution
    for j in range(n - 1, -1, -1):
        acc += net_charges[j] * gamma_bar ** (n - j - 1)
        out[j] = acc
    return out


def backlog_minmax(config: QueueConfig, net_charges: Sequence[float], n: int) -> float:
    """Stored energy after slot n from the closed min-over-max expression.

    Deliberately the naive O(n^2) evaluation: this is a verification
    oracle for simulate_path, not a production path.
    """
    deltas = np.asarray(net_charges, dtype=float)
    if n > len(deltas):
        raise ValueError(f"slot index {n} exceeds sequence length {len(deltas)}")
    if n == 0:
        return config.initial_charge_wh
    gbar = config.gamma_bar
    cap = config.capacity_wh
    dsum = _discounted_partial_sums(deltas, gbar, n)
    best = math.inf
    for m in range(n + 1):
        cm = config.initial_charge_wh if m == 0 else cap
        inner = -math.inf
        for j in range(m, n + 1):
            term = dsum[j]
            if j == m:
                term += cm * gbar ** (n - m)
            inner = max(inner, term)
        best = min(best, inner)
    return best


def backlog_dual_form(config: QueueConfig, net_charges: Sequence[float], n: int) -> float:
    """Stored energy after slot n from the mirrored max-over-min expression.

    Obtained by expressing the dual system's backlog with the min-max
    form and reflecting it through B(n) = C - B'(n).  The capacity term
    carries gamma_bar^(n-j), the discount that survives the reflection
    algebra (a published statement of this identity prints gamma there,
    which does not reproduce the recursion; see the tests).
    """
    deltas = np.asarray(net_charges, dtype=float)
    if n > len(deltas):
        raise ValueError(f"slot index {n} exceeds sequence length {len(deltas)}")
    if n == 0:
        return config.initial_charge_wh
    gbar = config.gamma_bar
    cap = config.capacity_wh
    dsum = _discounted_partial_sums(deltas, gbar, n)
    best = -math.inf
    for m in range(n + 1):
        inner = math.inf
        for j in range(m, n + 1):
            term = dsum[j]
            if j == m == 0:
                term += config.initial_charge_wh * gbar**n
            elif j > m and math.isfinite(cap):
                term += cap * gbar ** (n - j)
            elif j > m:
                term = math.inf
            inner = min(inner, term)
        best = max(best, inner)
    return best


def dual_transform(
    supply: Sequence[float], demand: Sequence[float], config: QueueConfig
) -> tuple[np.ndarray, np.ndarray, float]:
    """Build the mirrored system in which overflow and underflow swap roles.

    The dual queue has the same capacity and leakage ratio, arrivals
    gamma*C + s(n), service a(n), and initial charge C - B(0).  Simulating
    it yields B'(n) = C - B(n) slot by slot.
    """
    a = np.asarray(supply, dtype=float)
    s = np.asarray(demand, dtype=float)
    if a.shape != s.shape:
        raise ValueError("supply and demand must have the same length")
    if not math.isfinite(config.capacity_wh):
        raise ValueError("dual system requires a finite capacity")
    dual_supply = config.gamma * config.capacity_wh + s
    dual_demand = a.copy()
    dual_initial = config.capacity_wh - config.initial_charge_wh
    return dual_supply, dual_demand, dual_initial


def reference_path(config: QueueConfig, net_charges: Sequence[float]) -> np.ndarray:
    """Unconstrained linear surrogate: no clipping at 0 or at capacity.

    Element i is the surrogate content after slot i+1, seeded from the
    config's initial charge.  Values may be negative (an energy deficit)
    or exceed the capacity.
    """
    deltas = np.asarray(net_charges, dtype=float)
    if deltas.size == 0:
        return np.zeros(0)
    gbar = config.gamma_bar
    out, _ = lfilter([1.0], [1.0, -gbar], deltas, zi=[gbar * config.initial_charge_wh])
    return out


def effective_net_charge(
    raw_delta: float,
    constraints: ChargingConstraints,
    discharge_cap_on_surplus: bool = False,
) -> float:
    """Apply rate limits and charging efficiency to a raw net charge.

    The surplus is capped at the charge rate and scaled by the charging
    efficiency; the deficit magnitude is capped at the discharge rate.
    With discharge_cap_on_surplus=True the discharge cap is instead
    applied to the surplus term, an alternate printed convention kept
    only for side-by-side comparison.
    """
    surplus = max(raw_delta, 0.0)
    charged = min(surplus, constraints.charge_rate_wh) * constraints.efficiency
    if discharge_cap_on_surplus:
        discharged = min(surplus, constraints.discharge_rate_wh)
    else:
        discharged = min(max(-raw_delta, 0.0), constraints.discharge_rate_wh)
    return charged - discharged


def daily_to_slot_leakage(fraction_per_day: float, slots_per_day: int) -> float:
    """Convert a per-day self-discharge fraction to the per-slot ratio.

    Solves 1 - (1 - gamma)^slots = fraction, e.g. 20% per day over
    24 one-hour slots gives gamma close to 0.0093.
    """
    if not 0.0 <= fraction_per_day < 1.0:
        raise ValueError(
            f"daily fraction must be in [0, 1), got {fraction_per_day}"
        )
    if slots_per_day < 1:
        raise ValueError("slots_per_day must be >= 1")
    return 1.0 - (1.0 - fraction_per_day) ** (1.0 / slots_per_day)
