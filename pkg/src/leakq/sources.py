"""Per-slot supply, demand, and net-charge generators.

Every sampler is a pure function of an explicit random generator, so a
fixed (master seed, replication index) pair reproduces the exact stream
regardless of thread count.  Streams come from the counter-based Philox
generator; see make_rng.

Weibull and exponential draws use inverse-CDF transforms of a single
uniform each, which keeps the draw count per slot fixed and determinism
trivial.  Parametric models also expose analytic moments and, where the
moment-generating function is tractable, its logarithm; these feed the
closed-form analysis paths without simulation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn, logsumexp

__all__ = [
    "DeltaMoments",
    "GaussianChargeModel",
    "WindTurbineParams",
    "WeibullWind",
    "WindSupplyModel",
    "ConstPlusExpDemand",
    "TraceSource",
    "SupplyMinusDemand",
    "TraceCharge",
    "make_rng",
    "sample_gaussian",
    "sample_weibull_speed",
    "turbine_power",
    "wind_supply",
    "sample_demand",
    "load_trace",
]

SeedLike = Union[int, np.random.Generator]


def make_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Dedicated Philox stream for (master_seed, stream indices).

    Philox is counter-based, so distinct key tuples give independent
    streams and replications can be farmed out in any order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((master_seed, *stream))))


def _as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed))


@dataclass(frozen=True)
class DeltaMoments:
    """First three moments of a per-slot energy quantity (Wh units)."""

    mean_wh: float
    var_wh2: float
    mu3_wh3: float

    @property
    def std_wh(self) -> float:
        return math.sqrt(self.var_wh2)

    @property
    def skewness(self) -> float:
        if self.var_wh2 <= 0.0:
            return 0.0
        return self.mu3_wh3 / self.var_wh2**1.5


@dataclass(frozen=True)
class GaussianChargeModel:
    """I.i.d. normal energy values; usable as a raw net-charge model.

    Negative draws are legitimate when the model stands directly for the
    net charge (supply minus demand).
    """

    mean_wh: float
    std_wh: float

    def __post_init__(self) -> None:
        if self.std_wh < 0.0:
            raise ValueError("std_wh must be >= 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean_wh + self.std_wh * rng.standard_normal(n)

    def generate(self, rng: np.random.Generator, n: int, replication: int = 0) -> np.ndarray:
        return self.sample(rng, n)

    def moments(self) -> DeltaMoments:
        return DeltaMoments(self.mean_wh, self.std_wh**2, 0.0)

    def log_mgf(self, t: float) -> float:
        return t * self.mean_wh + 0.5 * (t * self.std_wh) ** 2

    def mgf_t_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class WindTurbineParams:
    """Cut-in/rated/cut-out power curve parameters of one turbine."""

    rated_power_kw: float
    cut_in_ms: float
    rated_speed_ms: float
    cut_out_ms: float
    swept_area_m2: float
    efficiency: float

    def __post_init__(self) -> None:
        if not 0.0 < self.cut_in_ms < self.rated_speed_ms < self.cut_out_ms:
            raise ValueError("need 0 < cut_in < rated_speed < cut_out")
        if self.rated_power_kw <= 0.0 or self.swept_area_m2 <= 0.0:
            raise ValueError("rated power and swept area must be > 0")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")

    @property
    def cubic_gain(self) -> float:
        """Coefficient of v^3 on the rising section (continuity at both ends)."""
        return self.rated_power_kw / (self.rated_speed_ms**3 - self.cut_in_ms**3)

    @property
    def cubic_offset(self) -> float:
        """Dimensionless offset making the rising section vanish at cut-in."""
        return self.cut_in_ms**3 / (self.rated_speed_ms**3 - self.cut_in_ms**3)


@dataclass(frozen=True)
class WeibullWind:
    """Weibull wind-speed law with scale c (m/s) and shape k."""

    scale_ms: float
    shape: float

    def __post_init__(self) -> None:
        if self.scale_ms <= 0.0 or self.shape <= 0.0:
            raise ValueError("scale and shape must be > 0")

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v <= 0.0, 0.0, 1.0 - np.exp(-((np.maximum(v, 0.0) / self.scale_ms) ** self.shape)))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        c, k = self.scale_ms, self.shape
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (k / c) * (v / c) ** (k - 1.0) * np.exp(-((v / c) ** k))
        return np.where(v <= 0.0, 0.0, out)

    def quantile(self, p):
        """Inverse CDF; p = 1 - 1/e maps exactly to the scale parameter."""
        p = np.asarray(p, dtype=float)
        return self.scale_ms * (-np.log1p(-p)) ** (1.0 / self.shape)

    def mean_ms(self) -> float:
        return self.scale_ms * gamma_fn(1.0 + 1.0 / self.shape)

    def var_ms2(self) -> float:
        g1 = gamma_fn(1.0 + 1.0 / self.shape)
        g2 = gamma_fn(1.0 + 2.0 / self.shape)
        return self.scale_ms**2 * (g2 - g1**2)


@dataclass(frozen=True)
class ConstPlusExpDemand:
    """Demand = fixed base plus an i.i.d. exponential component."""

    base_wh: float
    exp_mean_wh: float

    def __post_init__(self) -> None:
        if self.base_wh < 0.0 or self.exp_mean_wh < 0.0:
            raise ValueError("base_wh and exp_mean_wh must be >= 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        return self.base_wh - self.exp_mean_wh * np.log1p(-u)

    def moments(self) -> DeltaMoments:
        m = self.exp_mean_wh
        return DeltaMoments(self.base_wh + m, m**2, 2.0 * m**3)

    def log_mgf(self, t: float) -> float:
        tm = t * self.exp_mean_wh
        if tm >= 1.0:
            raise OverflowError(f"demand MGF diverges at t = {t}")
        return t * self.base_wh - math.log1p(-tm)

    def mgf_t_domain(self) -> tuple[float, float]:
        if self.exp_mean_wh == 0.0:
            return (-math.inf, math.inf)
        return (-math.inf, 1.0 / self.exp_mean_wh)


def turbine_power(v, p: WindTurbineParams):
    """Turbine output (kW) at wind speed v (m/s): cubic ramp, then rated.

    Zero below cut-in and from cut-out upward (the cut-out point itself
    yields zero).  Continuous at cut-in and at the rated speed.
    """
    v = np.asarray(v, dtype=float)
    rising = (v >= p.cut_in_ms) & (v < p.rated_speed_ms)
    rated = (v >= p.rated_speed_ms) & (v < p.cut_out_ms)
    out = np.zeros_like(v)
    out = np.where(rising, p.cubic_gain * v**3 - p.cubic_offset * p.rated_power_kw, out)
    out = np.where(rated, p.rated_power_kw, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class WindSupplyModel:
    """Per-slot wind energy: Weibull speed through the turbine power curve.

    One i.i.d. speed draw per slot.  Slot energy in Wh is
    power(kW) * swept_area * efficiency * slot_hours * 1000.
    """

    turbine: WindTurbineParams
    wind: WeibullWind
    slot_hours: float = 1.0

    @property
    def _scale_wh(self) -> float:
        return self.turbine.swept_area_m2 * self.turbine.efficiency * self.slot_hours * 1000.0

    @property
    def max_energy_wh(self) -> float:
        return self.turbine.rated_power_kw * self._scale_wh

    def energy_from_speed(self, v) -> np.ndarray:
        return turbine_power(v, self.turbine) * self._scale_wh

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        speeds = self.wind.quantile(rng.random(n))
        return self.energy_from_speed(speeds)

    def generate(self, rng: np.random.Generator, n: int, replication: int = 0) -> np.ndarray:
        return self.sample(rng, n)

    def _raw_moment(self, order: int) -> float:
        t, w = self.turbine, self.wind
        rising, _ = quad(
            lambda v: self.energy_from_speed(v) ** order * w.pdf(v),
            t.cut_in_ms,
            t.rated_speed_ms,
            limit=200,
        )
        plateau_prob = float(w.cdf(t.cut_out_ms) - w.cdf(t.rated_speed_ms))
        return rising + self.max_energy_wh**order * plateau_prob

    def moments(self) -> DeltaMoments:
        e1 = self._raw_moment(1)
        e2 = self._raw_moment(2)
        e3 = self._raw_moment(3)
        var = e2 - e1**2
        mu3 = e3 - 3.0 * e1 * e2 + 2.0 * e1**3
        return DeltaMoments(e1, var, mu3)

    def log_mgf(self, t: float) -> float:
        """log E[exp(t * energy)], by quadrature over the speed law.

        The energy is bounded, so this is finite for every t; the
        integrand is rescaled by the largest exponent to avoid overflow.
        """
        tb, w = self.turbine, self.wind
        shift = max(t * self.max_energy_wh, 0.0)
        idle_prob = float(w.cdf(tb.cut_in_ms)) + float(1.0 - w.cdf(tb.cut_out_ms))
        plateau_prob = float(w.cdf(tb.cut_out_ms) - w.cdf(tb.rated_speed_ms))
        rising, _ = quad(
            lambda v: math.exp(t * float(self.energy_from_speed(v)) - shift) * float(w.pdf(v)),
            tb.cut_in_ms,
            tb.rated_speed_ms,
            limit=200,
        )
        total = idle_prob * math.exp(-shift) + rising + plateau_prob * math.exp(t * self.max_energy_wh - shift)
        return shift + math.log(total)

    def mgf_t_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class TraceSource:
    """Recorded per-slot energies replayed verbatim, optionally looped."""

    values_wh: tuple[float, ...]
    loop: bool = False

    def __post_init__(self) -> None:
        if len(self.values_wh) == 0:
            raise ValueError("trace must contain at least one value")
        if not all(math.isfinite(v) for v in self.values_wh):
            raise ValueError("trace values must be finite")

    def __len__(self) -> int:
        return len(self.values_wh)

    def window(self, start: int, n: int) -> np.ndarray:
        values = np.asarray(self.values_wh, dtype=float)
        if self.loop:
            idx = (start + np.arange(n)) % len(values)
            return values[idx]
        if start + n > len(values):
            raise ValueError(
                f"trace has {len(values)} values, cannot serve {n} slots "
                f"from offset {start} without loop=true"
            )
        return values[start : start + n]


@dataclass(frozen=True)
class SupplyMinusDemand:
    """Net charge assembled from independent supply and demand models.

    Supply is drawn before demand on the shared stream, so the split is
    reproducible and the two remain independent within each slot.
    """

    supply: object
    demand: object

    def generate(self, rng: np.random.Generator, n: int, replication: int = 0) -> np.ndarray:
        a = self.supply.sample(rng, n)
        s = self.demand.sample(rng, n)
        return a - s

    def supply_demand(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        a = self.supply.sample(rng, n)
        s = self.demand.sample(rng, n)
        return a, s

    def moments(self) -> DeltaMoments:
        ma = self.supply.moments()
        ms = self.demand.moments()
        return DeltaMoments(
            ma.mean_wh - ms.mean_wh,
            ma.var_wh2 + ms.var_wh2,
            ma.mu3_wh3 - ms.mu3_wh3,
        )

    def log_mgf(self, t: float) -> float:
        return self.supply.log_mgf(t) + self.demand.log_mgf(-t)

    def mgf_t_domain(self) -> tuple[float, float]:
        a_lo, a_hi = self.supply.mgf_t_domain()
        s_lo, s_hi = self.demand.mgf_t_domain()
        return (max(a_lo, -s_hi), min(a_hi, -s_lo))


@dataclass(frozen=True)
class TraceCharge:
    """Net charge replayed from a trace; looped traces advance per replication."""

    trace: TraceSource

    def generate(self, rng: np.random.Generator, n: int, replication: int = 0) -> np.ndarray:
        start = replication * n if self.trace.loop else 0
        return self.trace.window(start, n)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # as a supply/demand component inside a composite the trace replays
        # from the start; only the stochastic side varies across replications
        return self.trace.window(0, n)

    def moments(self) -> DeltaMoments:
        x = np.asarray(self.trace.values_wh, dtype=float)
        mean = float(np.mean(x))
        var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
        mu3 = float(np.mean((x - mean) ** 3))
        return DeltaMoments(mean, var, mu3)

    def log_mgf(self, t: float) -> float:
        x = np.asarray(self.trace.values_wh, dtype=float)
        return float(logsumexp(t * x) - math.log(x.size))

    def mgf_t_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


# -- spec-facing convenience wrappers -------------------------------------


def sample_gaussian(model: GaussianChargeModel, rng_seed: SeedLike, n: int) -> np.ndarray:
    return model.sample(_as_rng(rng_seed), n)


def sample_weibull_speed(w: WeibullWind, rng_seed: SeedLike, n: int) -> np.ndarray:
    rng = _as_rng(rng_seed)
    return w.quantile(rng.random(n))


def wind_supply(
    p: WindTurbineParams,
    w: WeibullWind,
    rng_seed: SeedLike,
    n: int,
    slot_hours: float = 1.0,
) -> np.ndarray:
    return WindSupplyModel(p, w, slot_hours).sample(_as_rng(rng_seed), n)


def sample_demand(d: ConstPlusExpDemand, rng_seed: SeedLike, n: int) -> np.ndarray:
    return d.sample(_as_rng(rng_seed), n)


def load_trace(
    path: Union[str, Path],
    column: Union[int, str, None] = None,
    loop: bool = False,
) -> TraceSource:
    """Read one numeric Wh column from a CSV file.

    The header row is optional; a named column requires one.  Malformed
    cells are reported with their 1-based row number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh)]
    rows = [row for row in rows if any(cell.strip() for cell in row)]
    if not rows:
        raise ValueError(f"{path}: trace file is empty")

    col_idx = 0 if column is None else column
    start = 0
    if isinstance(column, str):
        header = [cell.strip() for cell in rows[0]]
        if column not in header:
            raise ValueError(f"{path}: column {column!r} not found in header {header}")
        col_idx = header.index(column)
        start = 1
    else:
        # numeric first row means there is no header to skip
        try:
            float(rows[0][col_idx])
        except (ValueError, IndexError):
            start = 1

    values = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if col_idx >= len(row):
            raise ValueError(f"{path}: row {i} has no column {col_idx}")
        cell = row[col_idx].strip()
        try:
            values.append(float(cell))
        except ValueError:
            raise ValueError(f"{path}: row {i}: {cell!r} is not numeric") from None
    if not values:
        raise ValueError(f"{path}: no numeric rows found")
    return TraceSource(tuple(values), loop=loop)
