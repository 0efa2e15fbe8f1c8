"""Report emission: sweep CSV/JSON plus deterministic log-log SVG plots."""

import csv
import dataclasses
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .harness import RATE_METRICS, config_to_dict, gradient_ratio_check

plt.rcParams["svg.hashsalt"] = "minkwave"
plt.rcParams["svg.fonttype"] = "path"


def axes_bounds(values, margin=0.1):
    """(lo, hi) covering positive values with a relative log-space margin."""
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        raise ValueError("log-log axes need positive values")
    lo, hi = np.log10(v.min()), np.log10(v.max())
    span = max(hi - lo, 0.05)
    return 10 ** (lo - margin * span), 10 ** (hi + margin * span)


def plot_rate(series, fit, title, path):
    """One log-log metric plot with the fitted power law overlaid."""
    eps = np.array([e for e, _ in series])
    val = np.array([v for _, v in series])
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.loglog(eps, val, "o", color="#1f6fb4", label="measured")
    if fit is not None:
        xs = np.linspace(eps.min(), eps.max(), 64)
        ax.loglog(xs, np.exp(fit.intercept) * xs ** fit.slope, "-",
                  color="#c44e52",
                  label=f"slope {fit.slope:.2f} (R$^2$={fit.r2:.3f})")
    ax.set_xlim(*axes_bounds(eps))
    ax.set_ylim(*axes_bounds(val))
    ax.set_xlabel("interface width")
    ax.set_ylabel(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(sweep, out_dir):
    """Write rates.csv, sweep_summary.json and one SVG per fitted metric.

    Raises on an empty sweep before any file is produced; byte output is
    deterministic given identical inputs.
    """
    ok_eps = [e for e, m in sweep.per_epsilon.items() if "error" not in m]
    if not ok_eps:
        raise ValueError("empty sweep: no epsilon run succeeded; nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "slope", "intercept", "r2", "n_points"])
        for name in RATE_METRICS:
            fit = sweep.rates.get(name)
            if fit is not None:
                writer.writerow([name, repr(fit.slope), repr(fit.intercept),
                                 repr(fit.r2), fit.n_points])

    summary = {
        "config": config_to_dict(sweep.config),
        "per_epsilon": {f"{e:.6g}": m for e, m in sweep.per_epsilon.items()},
        "rates": {k: dataclasses.asdict(v) for k, v in sweep.rates.items()},
        "gradient_ratio_checks": gradient_ratio_check(sweep),
    }
    with open(out_dir / "sweep_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    for name in RATE_METRICS:
        series = sweep.metric_series(name)
        if len(series) >= 2:
            plot_rate(series, sweep.rates.get(name), name, plots / f"{name}.svg")
    return out_dir
