"""Command-line face of the laboratory.

Subcommands: surface (chart build + CSV export), simulate (one eps run),
analyze (diagnostics on a run directory), sweep (full eps sweep with rates
and plots), ode-lab (1D fiber experiments), report (re-emit from summaries).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="minkwave",
        description="interface dynamics laboratory for the scalar wave equation "
                    "near timelike extremal surfaces")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("surface", help="build the chart and export its table")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None, help="CSV path (default: <outdir>/chart.csv)")

    p = sub.add_parser("simulate", help="evolve a single epsilon and persist snapshots")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, required=True)

    p = sub.add_parser("analyze", help="run diagnostics on an existing run directory")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--run-dir", required=True)

    p = sub.add_parser("sweep", help="simulate+analyze every epsilon, fit rates, emit report")
    p.add_argument("--config", required=True)

    p = sub.add_parser("ode-lab", help="1D fiber machinery experiments")
    p.add_argument("--case", choices=["kernel", "fixedpoint", "coercivity"],
                   required=True)
    p.add_argument("--h-amplitude", type=float, default=0.01)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--output", default=None, help="JSON report path (default stdout)")

    p = sub.add_parser("report", help="re-emit report files from run summaries")
    p.add_argument("--run-dir", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return _dispatch(args)


def _dispatch(args):
    from . import harness

    if args.command == "surface":
        cfg = harness.load_config(args.config)
        chart, _ = harness.build_run_chart(cfg, min(cfg.epsilons))
        out = args.output
        if out is None:
            out_dir = harness.resolve_output_dir(cfg)
            out_dir.mkdir(parents=True, exist_ok=True)
            out = out_dir / "chart.csv"
        chart.export_table(out)
        print(f"chart table written to {out} (rho={chart.rho:.4f})")
        return 0

    if args.command == "simulate":
        cfg = harness.load_config(args.config)
        run_dir = harness.resolve_output_dir(cfg) / f"eps_{args.epsilon:.6g}"
        _, meta = harness.simulate(cfg, args.epsilon, run_dir)
        print(json.dumps(meta, indent=2, sort_keys=True))
        return 0

    if args.command == "analyze":
        cfg = harness.load_config(args.config)
        report = harness.analyze(cfg, args.epsilon, args.run_dir)
        print(json.dumps(report.metrics, indent=2, sort_keys=True, default=float))
        return 0

    if args.command == "sweep":
        cfg = harness.load_config(args.config)
        sweep = harness.run_sweep(cfg)
        for name, fit in sweep.rates.items():
            print(f"{name}: slope={fit.slope:.3f} r2={fit.r2:.4f}")
        failures = {f"{e:.6g}": m["error"] for e, m in sweep.per_epsilon.items()
                    if "error" in m}
        if failures:
            print(f"failed runs: {failures}", file=sys.stderr)
            return 1
        return 0

    if args.command == "ode-lab":
        return _ode_lab(args)

    if args.command == "report":
        return _reemit(Path(args.run_dir))

    raise AssertionError(f"unhandled command {args.command}")


def _ode_lab(args):
    from . import odelab as ol
    from . import profile

    grid = ol.LineGrid()
    z = grid.z
    sech2 = 1.0 / np.cosh(z) ** 2
    if args.case == "kernel":
        w1 = ol.apply_S(grid, np.zeros_like(z), sech2)
        exact = z * sech2
        report = {
            "case": "kernel",
            "h_norm": ol.l2_norm(sech2, grid.dz),
            "w_h1": ol.h1_norm(w1, grid.dz),
            "iterations": 1,
            "factors": [],
            "residual": float(np.abs(w1 - exact).max()),
        }
    elif args.case == "fixedpoint":
        h = args.h_amplitude * sech2 / ol.l2_norm(sech2, grid.dz)
        w, iters, factors = ol.fixed_point(grid, h)
        report = {
            "case": "fixedpoint",
            "h_norm": ol.l2_norm(h, grid.dz),
            "w_h1": ol.h1_norm(w, grid.dz),
            "iterations": iters,
            "factors": [float(f) for f in factors],
            "residual": float(np.abs(ol.ode_residual(grid, w, h)).max()),
            "sobolev_ok": ol.sobolev_embedding_ok(w, grid.dz),
        }
    else:
        eps, rho = args.epsilon, 0.3
        zf = profile.fiber_grid(rho, eps)
        v = profile.q_eps(zf, eps)
        rep = ol.coercivity_check(zf, v, eps, vz=profile.q_eps_prime(zf, eps))
        report = {
            "case": "coercivity", "epsilon": eps,
            "h_norm": float(np.sqrt(max(rep.lhs, 0.0) / eps)),
            "w_h1": 0.0, "iterations": 0, "factors": [],
            "residual": rep.lhs,
            "theta1": rep.theta1, "energy_excess": rep.energy_excess,
            "ratio": rep.ratio, "floor_ok": rep.floor_ok, "holds": rep.holds,
        }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def _reemit(run_dir):
    from . import harness
    from .reporting import emit_report

    with open(run_dir / "sweep_summary.json") as fh:
        summary = json.load(fh)
    cfg = harness.config_from_dict(summary["config"])
    per_eps = {float(k): v for k, v in summary["per_epsilon"].items()}
    sweep = harness.SweepReport(config=cfg, per_epsilon=per_eps, rates={})
    for name in harness.RATE_METRICS:
        series = sweep.metric_series(name)
        if len(series) >= 3:
            try:
                sweep.rates[name] = harness.fit_rate(series)
            except harness.NonPositiveValue:
                pass
    emit_report(sweep, run_dir)
    print(f"report re-emitted under {run_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
