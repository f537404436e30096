"""Batch front-end: scenario-driven experiments with CSV/JSON emission.

Every command is a pure function of the scenario file (seed included),
so reruns are byte-identical; --plot additionally renders the matching
matplotlib figure next to each delimited output.  Exit codes: 0 success,
1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm, skewnorm

from . import plots
from .approx import (
    BoundReport,
    MgfSpec,
    classify_regime,
    fit_skew_normal,
    gaussian_loss_probs,
    kr_gap_bound,
    martingale_bounds,
    reference_moments,
    skew_normal_loss_probs,
    theta_star,
)
from .dynamics import QueueConfig
from .engine import run
from .metrics import qq_pairs
from .scenario import Scenario, ScenarioError, parse_scenario
from .sources import ConstPlusExpDemand, SupplyMinusDemand, TraceCharge
from .validate import SUITES, run_suite

__all__ = ["main"]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

CDF_MAX_POINTS = 4096  # larger samples are thinned to this many quantiles

SWEEP_COLUMNS = [
    "param",
    "sim_p_u",
    "sim_p_u_ci",
    "sim_p_o",
    "sim_p_o_ci",
    "gauss_p_u",
    "gauss_p_o",
    "skewnorm_p_u",
    "skewnorm_p_o",
    "martingale_basic",
    "martingale_sharp",
    "mean_stored",
]


def _fmt(value) -> str:
    """Full-precision cell; absent values serialize as empty."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _clean_json(obj):
    """Replace NaN floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {k: _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    return obj


def _write_json(payload: dict, out_path: Optional[Path]) -> None:
    text = json.dumps(_clean_json(payload), indent=2) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        out_path.write_text(text, encoding="utf-8")


def _write_csv(header: Sequence[str], rows: Sequence[Sequence], out_path: Path) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(cell) for cell in row) for row in rows]
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_scenario(path: str, seed_override: Optional[int]) -> Scenario:
    scenario = parse_scenario(path)
    if seed_override is not None:
        scenario.seed = seed_override
    for warning in scenario.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return scenario


def _cdf_table(sorted_values: np.ndarray) -> list[tuple[float, float]]:
    n = sorted_values.size
    if n <= CDF_MAX_POINTS:
        idx = np.arange(n)
    else:
        idx = np.unique(np.linspace(0, n - 1, CDF_MAX_POINTS).round().astype(int))
    return [(float(sorted_values[i]), (int(i) + 1) / n) for i in idx]


def _demand_for_bounds(scenario: Scenario):
    source = scenario.source
    if isinstance(source, SupplyMinusDemand):
        if isinstance(source.demand, ConstPlusExpDemand):
            return source.demand
        if isinstance(source.demand, TraceCharge):
            return np.asarray(source.demand.trace.values_wh)
    return None


def _analysis_payload(scenario: Scenario, config: QueueConfig) -> dict:
    """Closed-form analysis only; never simulates."""
    if config.gamma == 0.0:
        raise ScenarioError(
            f"{scenario.path}: gamma = 0 has no reference steady state; "
            "analytic estimates are undefined"
        )
    delta = scenario.delta_moments()
    ref = reference_moments(delta.mean_wh, delta.var_wh2, delta.skewness, config.gamma)
    regime = classify_regime(config.capacity_wh, ref)
    p_u, p_o = gaussian_loss_probs(config.capacity_wh, ref)

    payload = {
        "capacity_wh": config.capacity_wh,
        "leakage": {"per_day": scenario.leakage_per_day, "gamma": config.gamma},
        "delta": {
            "mean_wh": delta.mean_wh,
            "var_wh2": delta.var_wh2,
            "skewness": delta.skewness,
        },
        "reference": {
            "mean_wh": ref.mean_wh,
            "variance_wh2": ref.variance_wh2,
            "skewness": ref.skewness,
        },
        "regime": {
            "label": regime.label,
            "reference_mean_wh": regime.reference_mean_wh,
            "capacity_wh": regime.capacity_wh,
            "tolerance_wh": regime.tolerance_wh,
        },
        "gaussian": {"p_underflow": p_u, "p_overflow": p_o},
        "kr_gap_bound_wh": kr_gap_bound(config.capacity_wh, ref, config.gamma),
    }

    try:
        sn_u, sn_o = skew_normal_loss_probs(config.capacity_wh, ref)
        payload["skew_normal"] = {"p_underflow": sn_u, "p_overflow": sn_o}
    except ValueError as exc:
        payload["skew_normal"] = None
        payload["skew_normal_note"] = str(exc)

    payload["martingale"] = None
    spec = scenario.mgf_spec()
    if spec.mean_wh > config.gamma * config.capacity_wh:
        try:
            theta = theta_star(spec, config.gamma, config.capacity_wh)
            report = martingale_bounds(theta, config.capacity_wh, _demand_for_bounds(scenario))
            payload["martingale"] = _bound_dict(report)
        except ArithmeticError as exc:
            payload["martingale_note"] = str(exc)
    return payload


def _bound_dict(report: BoundReport) -> dict:
    return {
        "theta_star_per_wh": report.theta_star_per_wh,
        "basic_bound": report.basic_bound,
        "sharpened_bound": report.sharpened_bound,
        "notes": list(report.notes),
    }


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    summary = run(scenario.plan())
    out = Path(args.out) if args.out else Path(f"{Path(args.scenario).stem}.summary.json")
    base = out.with_suffix("")
    cdf_path = base.with_name(base.name + ".cdf.csv")

    payload = {
        "scenario": Path(args.scenario).name,
        "seed": scenario.seed,
        "n_slots": scenario.n_slots,
        "n_replications": scenario.n_replications,
        "warmup_slots": scenario.plan().resolved_warmup(),
        "p_underflow": summary.p_underflow,
        "p_underflow_ci": summary.p_underflow_ci,
        "p_overflow": summary.p_overflow,
        "p_overflow_ci": summary.p_overflow_ci,
        "mean_stored_wh": summary.moments.mean,
        "mean_stored_ci": summary.mean_stored_ci,
        "mean_loss_wh": summary.mean_loss_wh,
        "mean_loss_ci": summary.mean_loss_ci,
        "mean_waste_wh": summary.mean_waste_wh,
        "mean_waste_ci": summary.mean_waste_ci,
        "stored_moments": {
            "count": summary.moments.count,
            "mean": summary.moments.mean,
            "variance": summary.moments.variance,
            "skewness": summary.moments.skewness,
        },
        "replications": [
            {
                "n_slots": rep.n_slots,
                "mean_stored_wh": rep.mean_stored_wh,
                "p_underflow": rep.p_underflow,
                "p_overflow": rep.p_overflow,
                "mean_loss_wh": rep.mean_loss_wh,
                "mean_waste_wh": rep.mean_waste_wh,
            }
            for rep in summary.replications
        ],
    }
    _write_json(payload, out)
    table = _cdf_table(summary.empirical_cdf.values)
    _write_csv(["x_wh", "F"], table, cdf_path)
    if args.plot:
        png = base.with_name(base.name + ".cdf.png")
        plots.render_cdf(
            [x for x, _ in table], [f for _, f in table], png, scenario.config.capacity_wh
        )
        print(f"wrote {out}, {cdf_path}, {png}", file=sys.stderr)
    else:
        print(f"wrote {out}, {cdf_path}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    payload = _analysis_payload(scenario, scenario.config)
    _write_json(payload, None)
    return EXIT_OK


def _parse_grid(raw: str) -> np.ndarray:
    parts = raw.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if step <= 0.0 or stop < start:
        raise ValueError("grid must be ascending with a positive step")
    grid = np.arange(start, stop + 0.5 * step, step)
    if grid.size == 0:
        raise ValueError("grid is empty")
    return grid


def _sweep_config(scenario: Scenario, param: str, value: float) -> QueueConfig:
    cfg = scenario.config
    if param == "capacity":
        return QueueConfig(
            value, cfg.gamma, min(cfg.initial_charge_wh, value), cfg.slot_hours
        )
    return QueueConfig(cfg.capacity_wh, value, cfg.initial_charge_wh, cfg.slot_hours)


def cmd_sweep(args) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    try:
        grid = _parse_grid(args.grid)
        if args.param == "gamma" and (grid.min() < 0.0 or grid.max() >= 1.0):
            raise ValueError("gamma grid must lie in [0, 1)")
        if args.param == "capacity" and grid.min() < 0.0:
            raise ValueError("capacity grid must be nonnegative")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    delta = scenario.delta_moments()
    spec = scenario.mgf_spec()
    rows = []
    for value in grid:
        cfg = _sweep_config(scenario, args.param, float(value))
        summary = run(scenario.plan(config=cfg))
        row = {
            "param": float(value),
            "sim_p_u": summary.p_underflow,
            "sim_p_u_ci": summary.p_underflow_ci,
            "sim_p_o": summary.p_overflow,
            "sim_p_o_ci": summary.p_overflow_ci,
            "gauss_p_u": None,
            "gauss_p_o": None,
            "skewnorm_p_u": None,
            "skewnorm_p_o": None,
            "martingale_basic": None,
            "martingale_sharp": None,
            "mean_stored": summary.moments.mean,
        }
        if cfg.gamma > 0.0:
            ref = reference_moments(delta.mean_wh, delta.var_wh2, delta.skewness, cfg.gamma)
            row["gauss_p_u"], row["gauss_p_o"] = gaussian_loss_probs(cfg.capacity_wh, ref)
            try:
                row["skewnorm_p_u"], row["skewnorm_p_o"] = skew_normal_loss_probs(
                    cfg.capacity_wh, ref
                )
            except ValueError:
                pass
            if spec.mean_wh > cfg.gamma * cfg.capacity_wh:
                try:
                    theta = theta_star(spec, cfg.gamma, cfg.capacity_wh)
                    report = martingale_bounds(theta, cfg.capacity_wh, _demand_for_bounds(scenario))
                    row["martingale_basic"] = report.basic_bound
                    row["martingale_sharp"] = report.sharpened_bound
                except ArithmeticError:
                    pass
        rows.append(row)

    out = Path(args.out) if args.out else Path(f"{Path(args.scenario).stem}.sweep.csv")
    _write_csv(SWEEP_COLUMNS, [[row[c] for c in SWEEP_COLUMNS] for row in rows], out)
    if args.plot:
        png = out.with_suffix(".png")
        plots.render_sweep(rows, "param", png)
        print(f"wrote {out}, {png}", file=sys.stderr)
    else:
        print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


def cmd_qq(args) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    config = scenario.config
    if config.gamma == 0.0:
        print(
            "error: gamma = 0 has no reference steady state to compare against",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    delta = scenario.delta_moments()
    ref = reference_moments(delta.mean_wh, delta.var_wh2, delta.skewness, config.gamma)
    if args.reference == "gaussian":
        reference_quantile = lambda p: norm.ppf(p, loc=ref.mean_wh, scale=ref.std_wh)
    else:
        try:
            xi, omega, shape = fit_skew_normal(ref.mean_wh, ref.variance_wh2, ref.skewness)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        reference_quantile = lambda p: skewnorm.ppf(p, shape, loc=xi, scale=omega)

    summary = run(scenario.plan())
    pairs = qq_pairs(summary.empirical_cdf.values, reference_quantile, percent_step=5.0)
    percents = [5.0 * (i + 1) for i in range(len(pairs))]

    out = Path(args.out) if args.out else Path(f"{Path(args.scenario).stem}.qq.csv")
    rows = [(p, r, e) for p, (r, e) in zip(percents, pairs)]
    _write_csv(["percent", "reference_wh", "simulated_wh"], rows, out)
    if args.plot:
        png = out.with_suffix(".png")
        plots.render_qq(pairs, png, reference=args.reference)
        print(f"wrote {out}, {png}", file=sys.stderr)
    else:
        print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    # the scenario argument is accepted for interface uniformity; suites
    # build their own randomized instances
    _load_scenario(args.scenario, None)
    report = run_suite(args.suite, seed=args.seed if args.seed is not None else 0)
    _write_json(report, None)
    return EXIT_OK if report["passed"] else EXIT_FAILURE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakq",
        description="Simulate and analyze energy-storage queues with self-discharge.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file (INI format)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("simulate", help="run the scenario and emit summary JSON + CDF CSV")
    common(p)
    p.add_argument("--out", help="summary JSON path (CDF CSV lands next to it)")
    p.add_argument("--plot", action="store_true", help="render the CDF figure as PNG")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="closed-form analysis to stdout (no simulation)")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="simulated vs analytic quantities along a parameter grid")
    common(p)
    p.add_argument("--param", choices=("capacity", "gamma"), required=True)
    p.add_argument("--grid", required=True, help="start:stop:step (Wh for capacity)")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--plot", action="store_true", help="render the sweep figure as PNG")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run a property suite and report failures")
    common(p)
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("qq", help="quantile-quantile table against a fitted reference")
    common(p)
    p.add_argument("--reference", choices=("gaussian", "skewnormal"), default="gaussian")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--plot", action="store_true", help="render the Q-Q figure as PNG")
    p.set_defaults(func=cmd_qq)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
