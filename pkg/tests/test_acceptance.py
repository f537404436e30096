"""Acceptance gate: one test per release criterion, at pinned tolerances.

Run `pytest tests/test_acceptance.py -s` to get one PASS/FAIL line per
criterion.  Criteria 5 and 11 assert literature-style agreement factors
between per-slot event frequencies and reference-system tail estimates;
the exact stationary dynamics do not satisfy those factors (the
reference tail overcounts event slots by the sojourn-length ratio, and
the capacity clip strips the skewness the skew-normal reference adds).
They are kept at their stated thresholds and fail honestly; the
surrounding lines print the measured values.  Everything else is green.
"""

import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm, skewnorm

from leakq import (
    ConstPlusExpDemand,
    GaussianChargeModel,
    QueueConfig,
    SimPlan,
    SupplyMinusDemand,
    WeibullWind,
    WindSupplyModel,
    WindTurbineParams,
    backlog_dual_form,
    backlog_minmax,
    clt_probe,
    convergence_probe,
    daily_to_slot_leakage,
    fit_skew_normal,
    gaussian_loss_probs,
    make_rng,
    martingale_bounds,
    qq_pairs,
    reference_moments,
    run,
    simulate_arrays,
    simulate_path,
    theta_star,
)
from leakq.approx import MgfSpec
from leakq.cli import main

GAMMA = 0.0093
REL = 1e-9
ABS = 1e-6

TURBINE = WindTurbineParams(1.0, 3.0, 12.0, 25.0, 10.8, 0.5)
WIND = WeibullWind(7.0, 3.0)


def _report(num: int, name: str, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    return line


def _close(a, b):
    return abs(a - b) <= max(REL * max(abs(a), abs(b)), ABS)


@pytest.fixture(scope="module")
def gaussian_runs():
    """20 x 510k-slot replications per capacity: 1e7 post-warmup slots each."""
    source = GaussianChargeModel(200.0, 1000.0)
    ref = reference_moments(200.0, 1e6, 0.0, GAMMA)
    out = {}
    for capacity in (30_000.0, 40_000.0, 50_000.0):
        cfg = QueueConfig(capacity, GAMMA, min(ref.mean_wh, capacity))
        plan = SimPlan(cfg, source, 510_000, 20, warmup_slots=10_000, master_seed=42)
        out[capacity] = run(plan)
    return out


@pytest.fixture(scope="module")
def wind_runs():
    source = SupplyMinusDemand(WindSupplyModel(TURBINE, WIND), ConstPlusExpDemand(750.0, 50.0))
    delta = source.moments()
    ref = reference_moments(delta.mean_wh, delta.var_wh2, delta.skewness, GAMMA)
    out = {"ref": ref}
    for capacity in (40_000.0, 10_000.0):
        cfg = QueueConfig(capacity, GAMMA, min(ref.mean_wh, capacity))
        plan = SimPlan(cfg, source, 510_000, 20, warmup_slots=10_000, master_seed=3)
        out[capacity] = run(plan)
    return out


def test_c01_leakage_conversion():
    table = {0.05: 0.0021, 0.10: 0.0044, 0.20: 0.0093, 0.50: 0.0285}
    errors = {f: abs(daily_to_slot_leakage(f, 24) - g) for f, g in table.items()}
    ok = all(e <= 5e-5 for e in errors.values())
    line = _report(1, "daily-to-slot leakage table", ok, f"max abs err {max(errors.values()):.2e}")
    assert ok, line


def test_c02_reference_mean():
    mean = reference_moments(200.0, 1.0, 0.0, GAMMA).mean_wh
    ok = abs(mean - 21_500.0) <= 0.005 * 21_500.0
    line = _report(2, "reference mean 21.5 kWh", ok, f"mean {mean:.1f} Wh")
    assert ok, line


def test_c03_backlog_oracles():
    rng = np.random.default_rng(2024)
    worst = 0.0
    bad = 0
    for _ in range(1000):
        gamma = float(rng.choice([0.0, 0.01, 0.1, 0.5]))
        capacity = float(rng.choice([20.0, 200.0, 2000.0, np.inf]))
        b0 = float(rng.uniform(0.0, min(capacity, 1000.0)))
        n = int(rng.integers(1, 65))
        deltas = rng.normal(rng.uniform(-30.0, 30.0), rng.uniform(1.0, 60.0), n)
        cfg = QueueConfig(capacity, gamma, b0)
        want = simulate_path(cfg, deltas).records[-1].stored_wh
        for got in (backlog_minmax(cfg, deltas, n), backlog_dual_form(cfg, deltas, n)):
            err = abs(got - want) / max(abs(want), 1e-6)
            worst = max(worst, err)
            if not _close(got, want):
                bad += 1
    ok = bad == 0
    line = _report(3, "closed backlog forms vs recursion (1000 instances)", ok,
                   f"worst rel err {worst:.2e}, mismatches {bad}")
    assert ok, line


def test_c04_duality_coupled():
    capacity, b0 = 2_000.0, 800.0
    cfg = QueueConfig(capacity, GAMMA, b0)
    dual_cfg = QueueConfig(capacity, GAMMA, capacity - b0)
    deltas = GaussianChargeModel(100.0, 400.0).sample(make_rng(77), 100_000)
    stored, over, under = simulate_arrays(cfg, deltas)
    d_stored, d_over, d_under = simulate_arrays(dual_cfg, GAMMA * capacity - deltas)
    mirror_err = float(np.max(np.abs(stored + d_stored - capacity)))
    swaps = bool(np.all((under > 0) == (d_over > 0)) and np.all((over > 0) == (d_under > 0)))
    events = int(np.sum(under > 0) + np.sum(over > 0))
    ok = mirror_err <= REL * capacity + ABS and swaps and events > 0
    line = _report(4, "dual mirror over 1e5 slots", ok,
                   f"max |B+B'-C| = {mirror_err:.2e} Wh, events {events}, swap {swaps}")
    assert ok, line


def test_c05_gaussian_regime_probabilities(gaussian_runs):
    ref = reference_moments(200.0, 1e6, 0.0, GAMMA)
    ratios = {}
    for capacity, summary in gaussian_runs.items():
        p_u_hat = summary.p_underflow
        p_u_ref = gaussian_loss_probs(capacity, ref)[0]
        ratios[capacity] = max(p_u_hat / p_u_ref, p_u_ref / p_u_hat)
    p_o_hat = gaussian_runs[40_000.0].p_overflow
    p_o_ref = gaussian_loss_probs(40_000.0, ref)[1]
    o_ratio = max(p_o_hat / p_o_ref, p_o_ref / p_o_hat)
    ok = all(r <= 1.5 for r in ratios.values()) and o_ratio <= 2.0
    detail = (
        "p_u sim/analytic factors "
        + ", ".join(f"C={c/1000:.0f}k: {r:.2f}" for c, r in sorted(ratios.items()))
        + f"; p_o factor at 40 kWh: {o_ratio:.2f} (limits 1.5 / 2.0)"
    )
    line = _report(5, "normal-fit event probabilities", ok, detail)
    assert ok, line


def test_c06_underflow_capacity_independence(gaussian_runs):
    a, b = gaussian_runs[30_000.0], gaussian_runs[50_000.0]
    diff = abs(a.p_underflow - b.p_underflow)
    budget = a.p_underflow_ci + b.p_underflow_ci
    ok = diff < budget
    line = _report(6, "underflow plateau 30 vs 50 kWh", ok,
                   f"diff {diff:.3e} vs combined CI {budget:.3e}")
    assert ok, line


def test_c07_convergence_rate():
    cfg = QueueConfig(1_000.0, 0.1, 0.0)
    probe = convergence_probe(
        cfg, GaussianChargeModel(0.0, 0.0), (1_000.0, 0.0), 30, 8,
        checkpoints=[0, 1, 5, 10, 20, 30], master_seed=1,
    )
    det_err = max(abs(d - 1_000.0 * 0.9**n) / (1_000.0 * 0.9**n) for n, d in probe)

    cfg = QueueConfig(40_000.0, GAMMA, 0.0)
    probe = convergence_probe(
        cfg, GaussianChargeModel(200.0, 1000.0), (0.0, 40_000.0), 250, 1_000,
        checkpoints=[0, 50, 100, 150, 200, 250], master_seed=2,
    )
    ns = np.array([n for n, _ in probe], dtype=float)
    ds = np.array([d for _, d in probe])
    slope = float(np.polyfit(ns, np.log(ds), 1)[0])
    limit = 0.9 * math.log(1.0 - GAMMA)
    ok = det_err <= REL and slope <= limit
    line = _report(7, "geometric convergence", ok,
                   f"deterministic rel err {det_err:.2e}; slope {slope:.5f} <= {limit:.5f}")
    assert ok, line


def test_c08_clt_monotone():
    def sampler(rng, n):
        return 1000.0 * (rng.standard_exponential(n) - 1.0) + 200.0

    n = 100_000
    results = clt_probe(sampler, 200.0, 1e6, [0.1, 0.03, 0.01, 0.003], n, master_seed=8)
    band = math.sqrt(math.log(2.0 / 0.05) / (2.0 * n))
    violations = [
        (g1, g2)
        for (g1, k1), (g2, k2) in zip(results, results[1:])
        if max(k1, k2) > 2.0 * band and not k2 < k1
    ]
    ok = not violations
    detail = ", ".join(f"gamma={g}: {k:.4f}" for g, k in results) + f"; 2x DKW band {2*band:.4f}"
    line = _report(8, "K-S monotone toward normal", ok, detail)
    assert ok, line


def test_c09_martingale_validity():
    source = SupplyMinusDemand(WindSupplyModel(TURBINE, WIND), ConstPlusExpDemand(350.0, 50.0))
    spec = MgfSpec.from_model(source)
    rows = []
    ok = True
    for capacity in (500.0, 1_000.0, 2_000.0):
        theta = theta_star(spec, GAMMA, capacity)
        bounds = martingale_bounds(theta, capacity, source.demand)
        cfg = QueueConfig(capacity, GAMMA, capacity / 2.0)
        plan = SimPlan(cfg, source, 510_000, 20, warmup_slots=10_000, master_seed=9)
        sim = run(plan).p_underflow
        rows.append(f"C={capacity:.0f}: sim {sim:.4g} <= sharp {bounds.sharpened_bound:.4g} <= basic {bounds.basic_bound:.4g}")
        ok = ok and sim <= bounds.sharpened_bound <= bounds.basic_bound
    line = _report(9, "exponential underflow bounds hold", ok, "; ".join(rows))
    assert ok, line


def test_c10_wind_moments():
    x = WindSupplyModel(TURBINE, WIND).sample(make_rng(31), 1_000_000)
    mean, std = float(x.mean()), float(x.std(ddof=1))
    ok = abs(mean - 1_000.0) <= 15.0 and abs(std - 1_050.0) <= 25.0
    line = _report(10, "wind source moments", ok, f"mean {mean:.1f} Wh, std {std:.1f} Wh")
    assert ok, line


def test_c11_qq_behavior(wind_runs):
    ref = wind_runs["ref"]
    sigma = ref.std_wh
    xi, omega, shape = fit_skew_normal(ref.mean_wh, ref.variance_wh2, ref.skewness)

    def max_dev(summary, quantile_fn):
        pairs = qq_pairs(summary.empirical_cdf.values, quantile_fn, percent_step=5.0)
        return max(abs(emp - r) for r, emp in pairs)

    gauss_q = lambda p: norm.ppf(p, loc=ref.mean_wh, scale=sigma)
    skew_q = lambda p: skewnorm.ppf(p, shape, loc=xi, scale=omega)

    dev40_gauss = max_dev(wind_runs[40_000.0], gauss_q)
    dev40_skew = max_dev(wind_runs[40_000.0], skew_q)
    dev10_gauss = max_dev(wind_runs[10_000.0], gauss_q)

    near_diagonal = dev40_gauss < 0.15 * sigma
    skew_improves = dev40_skew <= dev40_gauss
    far_when_capped = dev10_gauss > 0.5 * sigma
    ok = near_diagonal and skew_improves and far_when_capped
    detail = (
        f"40 kWh: gauss dev {dev40_gauss/sigma:.3f} sigma (<0.15), "
        f"skew-normal dev {dev40_skew/sigma:.3f} sigma (must reduce); "
        f"10 kWh: {dev10_gauss/sigma:.3f} sigma (>0.5)"
    )
    line = _report(11, "Q-Q regime behavior", ok, detail)
    assert ok, line


def test_c12_determinism(tmp_path, monkeypatch):
    scenario = tmp_path / "det.ini"
    scenario.write_text(
        "[queue]\ncapacity_wh = 20000\nleakage_per_day = 0.20\n"
        "initial_charge_wh = 10000\nslot_hours = 1\n"
        "[supply]\ntype = gaussian\nmean_wh = 200\nstd_wh = 1000\n"
        "[simulation]\nslots = 6000\nreplications = 4\nwarmup = 500\nseed = 12\n"
    )
    monkeypatch.chdir(tmp_path)

    def snapshot(tag, threads):
        monkeypatch.setenv("LEAKQ_THREADS", threads)
        assert main(["simulate", str(scenario), "--out", f"{tag}.json", "--plot"]) == 0
        assert main([
            "sweep", str(scenario), "--param", "capacity",
            "--grid", "15000:25000:5000", "--out", f"{tag}.sweep.csv",
        ]) == 0
        assert main(["qq", str(scenario), "--out", f"{tag}.qq.csv"]) == 0
        return {
            name: Path(f"{tag}{suffix}").read_bytes()
            for name, suffix in [
                ("summary", ".json"),
                ("cdf", ".cdf.csv"),
                ("png", ".cdf.png"),
                ("sweep", ".sweep.csv"),
                ("qq", ".qq.csv"),
            ]
        }

    first = snapshot("a", "1")
    second = snapshot("b", "1")
    threaded = snapshot("c", "4")
    same_rerun = all(first[k] == second[k] for k in first)
    same_threads = all(first[k] == threaded[k] for k in first)
    ok = same_rerun and same_threads
    line = _report(12, "byte-identical reruns across thread counts", ok,
                   f"rerun {same_rerun}, threads {same_threads}")
    assert ok, line
