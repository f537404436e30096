"""Monte Carlo orchestration: replications, warmup, steady-state summaries.

Replication r always draws from the Philox stream keyed by
(master_seed, r) and results are merged in replication order, so a plan
is a pure function of its contents no matter how many worker threads run
(cap them with the LEAKQ_THREADS environment variable).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .dynamics import QueueConfig
from .metrics import EmpiricalCdf, MomentSummary, kr_distance, moments
from .sources import make_rng

__all__ = [
    "SimPlan",
    "ReplicationSummary",
    "SteadyStateSummary",
    "simulate_arrays",
    "run",
    "convergence_probe",
    "dual_underflow_via_overflow",
]


@njit(cache=True)
def _recursion_kernel(b0, gamma_bar, capacity, deltas):  # pragma: no cover - jitted
    n = deltas.shape[0]
    stored = np.empty(n)
    overflow = np.empty(n)
    underflow = np.empty(n)
    b = b0
    for i in range(n):
        inner = gamma_bar * b + deltas[i]
        o = inner - capacity
        overflow[i] = o if o > 0.0 else 0.0
        u = -inner
        underflow[i] = u if u > 0.0 else 0.0
        if inner > capacity:
            b = capacity
        elif inner < 0.0:
            b = 0.0
        else:
            b = inner
        stored[i] = b
    return stored, overflow, underflow


def simulate_arrays(
    config: QueueConfig, net_charges: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vector form of the slot recursion: (stored, overflow, underflow).

    Matches dynamics.simulate_path value for value; this is the fast path
    used for long Monte Carlo runs.
    """
    deltas = np.ascontiguousarray(net_charges, dtype=np.float64)
    return _recursion_kernel(
        config.initial_charge_wh, config.gamma_bar, config.capacity_wh, deltas
    )


@dataclass(frozen=True)
class SimPlan:
    """One steady-state experiment: queue, net-charge source, and run sizing.

    source must expose generate(rng, n, replication) returning per-slot
    net charges in Wh.  warmup_slots defaults to roughly ten leakage time
    constants (at least 10^4 slots), or 10^5 slots when gamma is zero.
    """

    config: QueueConfig
    source: object
    n_slots: int
    n_replications: int = 20
    warmup_slots: Optional[int] = None
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        if self.n_replications < 1:
            raise ValueError("n_replications must be >= 1")
        if self.resolved_warmup() >= self.n_slots:
            raise ValueError(
                f"warmup ({self.resolved_warmup()} slots) must be shorter than "
                f"n_slots ({self.n_slots}); pass warmup_slots explicitly for short runs"
            )

    def resolved_warmup(self) -> int:
        if self.warmup_slots is not None:
            if self.warmup_slots < 0:
                raise ValueError("warmup_slots must be >= 0")
            return self.warmup_slots
        if self.config.gamma == 0.0:
            return 100_000
        return max(math.ceil(10.0 / self.config.gamma), 10_000)


@dataclass(frozen=True)
class ReplicationSummary:
    """Post-warmup statistics of a single replication."""

    n_slots: int
    mean_stored_wh: float
    p_underflow: float
    p_overflow: float
    mean_loss_wh: float
    mean_waste_wh: float


@dataclass(frozen=True)
class SteadyStateSummary:
    """Pooled post-warmup statistics with per-replication breakdown.

    Confidence halfwidths are the 95% normal approximation over the
    per-replication means (NaN with a single replication).
    """

    moments: MomentSummary
    empirical_cdf: EmpiricalCdf
    p_underflow: float
    p_overflow: float
    mean_loss_wh: float
    mean_waste_wh: float
    p_underflow_ci: float
    p_overflow_ci: float
    mean_stored_ci: float
    mean_loss_ci: float
    mean_waste_ci: float
    replications: tuple[ReplicationSummary, ...] = field(repr=False, default=())


def _ci_halfwidth(values: np.ndarray) -> float:
    if values.size < 2:
        return math.nan
    return 1.96 * float(np.std(values, ddof=1)) / math.sqrt(values.size)


def _thread_count(n_replications: int) -> int:
    raw = os.environ.get("LEAKQ_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"LEAKQ_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(threads, n_replications))


def _run_replication(plan: SimPlan, r: int, warmup: int):
    rng = make_rng(plan.master_seed, r)
    deltas = plan.source.generate(rng, plan.n_slots, r)
    stored, overflow, underflow = simulate_arrays(plan.config, np.asarray(deltas))
    s = stored[warmup:]
    o = overflow[warmup:]
    u = underflow[warmup:]
    rep = ReplicationSummary(
        n_slots=s.size,
        mean_stored_wh=float(np.mean(s)),
        p_underflow=float(np.mean(u > 0.0)),
        p_overflow=float(np.mean(o > 0.0)),
        mean_loss_wh=float(np.mean(u)),
        mean_waste_wh=float(np.mean(o)),
    )
    return rep, s


def run(plan: SimPlan) -> SteadyStateSummary:
    """Execute the plan and pool the post-warmup statistics.

    Replications may execute on a thread pool; the merge is performed in
    replication order, which keeps the summary bit-identical for any
    thread count.
    """
    warmup = plan.resolved_warmup()
    indices = range(plan.n_replications)
    threads = _thread_count(plan.n_replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _run_replication(plan, r, warmup), indices))
    else:
        results = [_run_replication(plan, r, warmup) for r in indices]

    reps = tuple(rep for rep, _ in results)
    pooled = np.concatenate([s for _, s in results])
    p_u = np.array([rep.p_underflow for rep in reps])
    p_o = np.array([rep.p_overflow for rep in reps])
    mean_s = np.array([rep.mean_stored_wh for rep in reps])
    loss = np.array([rep.mean_loss_wh for rep in reps])
    waste = np.array([rep.mean_waste_wh for rep in reps])

    return SteadyStateSummary(
        moments=moments(pooled),
        empirical_cdf=EmpiricalCdf(pooled),
        p_underflow=float(np.mean(p_u)),
        p_overflow=float(np.mean(p_o)),
        mean_loss_wh=float(np.mean(loss)),
        mean_waste_wh=float(np.mean(waste)),
        p_underflow_ci=_ci_halfwidth(p_u),
        p_overflow_ci=_ci_halfwidth(p_o),
        mean_stored_ci=_ci_halfwidth(mean_s),
        mean_loss_ci=_ci_halfwidth(loss),
        mean_waste_ci=_ci_halfwidth(waste),
        replications=reps,
    )


def convergence_probe(
    config: QueueConfig,
    source: object,
    initial_pair: tuple[float, float],
    horizon: int,
    n_replications: int,
    checkpoints: Optional[Sequence[int]] = None,
    master_seed: int = 0,
) -> list[tuple[int, float]]:
    """Distance between two ensembles started from different charges.

    Ensemble A starts at initial_pair[0], ensemble B at initial_pair[1];
    all streams are independent.  Returns the empirical KR distance
    between the two stored-energy samples at each checkpoint slot.  The
    distance contracts at least geometrically (factor 1 - gamma per
    slot) until it reaches the sampling-noise floor.
    """
    b0a, b0b = initial_pair
    for b0 in (b0a, b0b):
        if not 0.0 <= b0 <= config.capacity_wh:
            raise ValueError(f"initial charge {b0} outside [0, capacity]")
    if checkpoints is None:
        checkpoints = sorted({int(x) for x in np.linspace(0, horizon, 17)})
    if any(n < 0 or n > horizon for n in checkpoints):
        raise ValueError("checkpoints must lie in [0, horizon]")

    ensembles = []
    for label, b0 in enumerate((b0a, b0b)):
        cfg = QueueConfig(config.capacity_wh, config.gamma, b0, config.slot_hours)
        values = np.empty((n_replications, len(checkpoints)))
        for r in range(n_replications):
            rng = make_rng(master_seed, label, r)
            deltas = np.asarray(source.generate(rng, horizon, r))
            stored, _, _ = simulate_arrays(cfg, deltas)
            for j, n in enumerate(checkpoints):
                values[r, j] = b0 if n == 0 else stored[n - 1]
        ensembles.append(values)

    out = []
    for j, n in enumerate(checkpoints):
        d = kr_distance(EmpiricalCdf(ensembles[0][:, j]), EmpiricalCdf(ensembles[1][:, j]))
        out.append((int(n), d))
    return out


def dual_underflow_via_overflow(plan: SimPlan) -> float:
    """Underflow probability obtained as the dual system's overflow rate.

    The dual replays the same net-charge streams transformed to
    gamma*C - delta, starts from C - B(0), and counts overflow events;
    slot for slot these coincide with the original underflow events.
    """
    if not math.isfinite(plan.config.capacity_wh):
        raise ValueError("dual system requires a finite capacity")
    warmup = plan.resolved_warmup()
    cfg = plan.config
    dual_cfg = QueueConfig(
        cfg.capacity_wh,
        cfg.gamma,
        cfg.capacity_wh - cfg.initial_charge_wh,
        cfg.slot_hours,
    )
    freqs = np.empty(plan.n_replications)
    for r in range(plan.n_replications):
        rng = make_rng(plan.master_seed, r)
        deltas = np.asarray(plan.source.generate(rng, plan.n_slots, r))
        dual_deltas = cfg.gamma * cfg.capacity_wh - deltas
        _, overflow, _ = simulate_arrays(dual_cfg, dual_deltas)
        freqs[r] = float(np.mean(overflow[warmup:] > 0.0))
    return float(np.mean(freqs))
