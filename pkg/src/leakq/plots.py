"""Figure rendering for the CLI report path.

Each function takes the already-computed data that also lands in the
delimited output and writes one PNG next to it.  The Agg backend is
forced so figures render identically in headless runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_cdf", "render_sweep", "render_qq"]

# strip the build-dependent Software tag so reruns are byte-identical
_PNG_META = {"Software": None}


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=130, metadata=_PNG_META)
    plt.close(fig)
    return out_path


def render_cdf(x_wh: Sequence[float], F: Sequence[float], out_path, capacity_wh: Optional[float] = None) -> Path:
    """Empirical CDF of the stored energy."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.step(x_wh, F, where="post", lw=1.2)
    if capacity_wh is not None and capacity_wh == capacity_wh and capacity_wh != float("inf"):
        ax.axvline(capacity_wh, color="gray", ls="--", lw=0.8, label="capacity")
        ax.legend(loc="lower right")
    ax.set_xlabel("stored energy (Wh)")
    ax.set_ylabel("F(x)")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def render_sweep(rows: Sequence[dict], param: str, out_path) -> Path:
    """Simulated vs analytic event probabilities and the mean stored energy."""
    xs = [r[param] for r in rows]

    def series(key):
        return [r[key] if r.get(key) is not None else float("nan") for r in rows]

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
    top.plot(xs, series("sim_p_u"), "o-", ms=3, label="sim underflow")
    top.plot(xs, series("sim_p_o"), "s-", ms=3, label="sim overflow")
    top.plot(xs, series("gauss_p_u"), "--", label="normal-fit underflow")
    top.plot(xs, series("gauss_p_o"), ":", label="normal-fit overflow")
    mart = series("martingale_basic")
    if any(v == v for v in mart):
        top.plot(xs, mart, "-.", label="exponential bound")
    top.set_yscale("log")
    top.set_ylabel("event probability per slot")
    top.grid(alpha=0.3, which="both")
    top.legend(fontsize=8)

    bottom.plot(xs, series("mean_stored"), "o-", ms=3, color="tab:green")
    bottom.set_xlabel(param)
    bottom.set_ylabel("mean stored energy (Wh)")
    bottom.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def render_qq(pairs: Sequence[tuple[float, float]], out_path, reference: str = "reference") -> Path:
    """Quantile-quantile scatter against the fitted reference distribution."""
    ref = [p[0] for p in pairs]
    emp = [p[1] for p in pairs]
    lo = min(min(ref), min(emp))
    hi = max(max(ref), max(emp))
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    ax.plot([lo, hi], [lo, hi], color="gray", lw=0.8)
    ax.plot(ref, emp, "o", ms=4)
    ax.set_xlabel(f"{reference} quantile (Wh)")
    ax.set_ylabel("simulated quantile (Wh)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)
