"""Property batteries behind the `leakq validate` command.

Each suite returns a machine-readable report dict: name, pass flag, the
individual checks with measured values, and a flat failure list.  The
suites are self-contained (they build their own randomized instances)
and deterministic for a fixed seed.
"""

from __future__ import annotations

import math

import numpy as np

from .approx import (
    MgfSpec,
    clt_probe,
    martingale_bounds,
    reference_moments,
    theta_star,
)
from .dynamics import QueueConfig, backlog_dual_form, backlog_minmax, simulate_path
from .engine import SimPlan, convergence_probe, run, simulate_arrays
from .metrics import EmpiricalCdf, kr_distance
from .sources import (
    ConstPlusExpDemand,
    GaussianChargeModel,
    SupplyMinusDemand,
    WeibullWind,
    WindSupplyModel,
    WindTurbineParams,
    make_rng,
)

__all__ = ["SUITES", "run_suite"]

_REL = 1e-9
_ABS = 1e-6


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= max(_REL * max(abs(a), abs(b)), _ABS)


def _report(suite: str, checks: list[dict], failures: list[str]) -> dict:
    return {
        "suite": suite,
        "passed": not failures,
        "checks": checks,
        "failures": failures,
    }


def suite_dynamics(seed: int = 0) -> dict:
    """Closed-form stored-energy expressions against the slot recursion."""
    rng = np.random.default_rng(seed)
    failures = []
    trials = 1000
    for trial in range(trials):
        gamma = float(rng.choice([0.0, 0.01, 0.1, 0.5]))
        capacity = float(rng.choice([20.0, 200.0, 2000.0, np.inf]))
        b0 = float(rng.uniform(0.0, min(capacity, 1000.0)))
        n = int(rng.integers(1, 65))
        deltas = rng.normal(rng.uniform(-30.0, 30.0), rng.uniform(1.0, 60.0), n)
        cfg = QueueConfig(capacity, gamma, b0)
        want = simulate_path(cfg, deltas).records[-1].stored_wh
        minmax = backlog_minmax(cfg, deltas, n)
        dual = backlog_dual_form(cfg, deltas, n)
        if not _close(minmax, want):
            failures.append(f"trial {trial}: min-max form {minmax} != recursion {want}")
        if not _close(dual, want):
            failures.append(f"trial {trial}: max-min form {dual} != recursion {want}")
    checks = [{"name": "closed forms vs recursion", "trials": trials, "failed": len(failures)}]
    return _report("dynamics", checks, failures)


def suite_duality(seed: int = 0) -> dict:
    """Mirrored-system identities on coupled random instances."""
    rng = np.random.default_rng(seed)
    failures = []
    trials = 1000
    for trial in range(trials):
        gamma = float(rng.choice([0.0, 0.0093, 0.1, 0.5]))
        capacity = float(rng.choice([100.0, 2000.0]))
        b0 = float(rng.uniform(0.0, capacity))
        n = int(rng.integers(16, 129))
        deltas = rng.normal(rng.uniform(-20.0, 20.0), rng.uniform(1.0, 50.0), n)
        cfg = QueueConfig(capacity, gamma, b0)
        dual_cfg = QueueConfig(capacity, gamma, capacity - b0)
        stored, over, under = simulate_arrays(cfg, deltas)
        d_stored, d_over, d_under = simulate_arrays(dual_cfg, gamma * capacity - deltas)
        if not np.all(np.abs(stored + d_stored - capacity) <= _REL * capacity + _ABS):
            failures.append(f"trial {trial}: B + B' != C")
        if np.any((under > 0.0) != (d_over > 0.0)) or np.any((over > 0.0) != (d_under > 0.0)):
            failures.append(f"trial {trial}: events did not swap")
    checks = [{"name": "mirror identity and event swap", "trials": trials, "failed": len(failures)}]
    return _report("duality", checks, failures)


def suite_convergence(seed: int = 0) -> dict:
    """Geometric contraction of the distance between coupled ensembles."""
    failures = []
    checks = []

    cfg = QueueConfig(1000.0, 0.1, 0.0)
    probe = convergence_probe(
        cfg, GaussianChargeModel(0.0, 0.0), (1000.0, 0.0), 30, 4,
        checkpoints=[0, 5, 10, 20, 30], master_seed=seed,
    )
    worst = max(abs(d - 1000.0 * 0.9**n) for n, d in probe)
    checks.append({"name": "deterministic geometric decay", "max_error_wh": worst})
    if worst > 1e-6:
        failures.append(f"deterministic decay error {worst} Wh")

    gamma = 0.02
    cfg = QueueConfig(4000.0, gamma, 0.0)
    probe = convergence_probe(
        cfg, GaussianChargeModel(20.0, 100.0), (0.0, 4000.0), 150, 800,
        checkpoints=[0, 25, 50, 75, 100], master_seed=seed + 1,
    )
    ns = np.array([n for n, _ in probe], dtype=float)
    ds = np.array([d for _, d in probe])
    slope = float(np.polyfit(ns, np.log(ds), 1)[0])
    limit = 0.9 * math.log(1.0 - gamma)
    checks.append({"name": "stochastic decay slope", "slope": slope, "limit": limit})
    if slope > limit:
        failures.append(f"log-distance slope {slope} above {limit}")
    return _report("convergence", checks, failures)


def suite_clt(seed: int = 0) -> dict:
    """Normal convergence of the reference steady state as leakage shrinks."""

    def sampler(rng, n):
        return 1000.0 * (rng.standard_exponential(n) - 1.0) + 200.0

    gammas = [0.1, 0.03, 0.01, 0.003]
    n = 100_000
    results = clt_probe(sampler, 200.0, 1e6, gammas, n, master_seed=seed)
    band = math.sqrt(math.log(2.0 / 0.05) / (2.0 * n))
    failures = []
    for (g1, k1), (g2, k2) in zip(results, results[1:]):
        if max(k1, k2) > 2.0 * band and not k2 < k1:
            failures.append(f"K-S did not decrease from gamma={g1} ({k1}) to gamma={g2} ({k2})")
    checks = [
        {"name": "K-S vs standard normal", "gamma": g, "ks": k, "noise_band": band}
        for g, k in results
    ]
    return _report("clt", checks, failures)


def _wind_scenario_source() -> SupplyMinusDemand:
    turbine = WindTurbineParams(1.0, 3.0, 12.0, 25.0, 10.8, 0.5)
    return SupplyMinusDemand(
        WindSupplyModel(turbine, WeibullWind(7.0, 3.0)),
        ConstPlusExpDemand(350.0, 50.0),
    )


def suite_bounds(seed: int = 0) -> dict:
    """Exponential underflow bounds against simulation, wind-style source."""
    source = _wind_scenario_source()
    gamma = 0.0093
    spec = MgfSpec.from_model(source)
    failures = []
    checks = []
    for capacity in (500.0, 1000.0, 2000.0):
        cfg = QueueConfig(capacity, gamma, capacity / 2.0)
        theta = theta_star(spec, gamma, capacity)
        report = martingale_bounds(theta, capacity, source.demand)
        plan = SimPlan(cfg, source, 250_000, 8, warmup_slots=10_000, master_seed=seed)
        sim = run(plan)
        checks.append(
            {
                "name": "underflow bound",
                "capacity_wh": capacity,
                "simulated": sim.p_underflow,
                "basic": report.basic_bound,
                "sharpened": report.sharpened_bound,
            }
        )
        if sim.p_underflow > report.basic_bound:
            failures.append(
                f"C={capacity}: simulated {sim.p_underflow} above basic bound {report.basic_bound}"
            )
        if report.sharpened_bound is not None:
            if sim.p_underflow > report.sharpened_bound:
                failures.append(
                    f"C={capacity}: simulated {sim.p_underflow} above sharpened "
                    f"bound {report.sharpened_bound}"
                )
            if report.sharpened_bound > report.basic_bound:
                failures.append(f"C={capacity}: sharpened bound above basic bound")
    return _report("bounds", checks, failures)


SUITES = {
    "dynamics": suite_dynamics,
    "duality": suite_duality,
    "convergence": suite_convergence,
    "clt": suite_clt,
    "bounds": suite_bounds,
}


def run_suite(name: str, seed: int = 0) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](seed)
