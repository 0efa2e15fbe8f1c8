"""Experiment orchestration: configuration, eps-sweeps, rate fits, reports.

A sweep runs, for each eps: chart construction, well-prepared initial data,
forward+backward evolution from t = 0 with snapshot persistence, pullback on
the slice grid, per-fiber modulation, comparison-field assembly, and all
deviation metrics; then fits log-log rates across eps.  One failed eps is
recorded and never corrupts the others.
"""

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import decomposition as dec
from . import diagnostics as diag
from . import geometry as geo
from . import profile, wave
from .errors import MinkwaveError, NonPositiveValue
from .snapshots import SnapshotStore

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "MINKWAVE_OUTPUT_ROOT"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridRules:
    points_per_eps: int = 8        # h = eps / points_per_eps
    cfl_safety: float = 0.5
    dt_eps_cap: float = 0.2
    box_margin: float = 0.5
    snap_per_eps: float = 0.25     # snapshot cadence ~ snap_per_eps * eps


@dataclass(frozen=True)
class SliceRules:
    n_y0: int = 25
    n_y1: int = 256
    fiber_per_eps: int = 16        # fiber spacing = eps / fiber_per_eps


@dataclass(frozen=True)
class Thresholds:
    c2: float = 0.05
    c3: float = 0.1
    delta: float = 0.05
    alpha0: float = 0.05
    det_floor: float = 1e-6


@dataclass(frozen=True)
class RateBands:
    theta_slope_min: float = 1.6
    theta_r2_min: float = 0.95
    h1_slope_min: float = 0.8
    sstar_slope_min: float = 0.8
    far_energy_slope_min: float = 1.6
    far_l2_slope_min: float = 2.2
    grad_ratio_tol: float = 0.10


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "collapsing_circle"       # or "wobbly"
    epsilons: tuple = (0.08, 0.06, 0.045)
    rho: float = 0.3                          # None -> curvature default
    T0: float = 0.4
    T1_offset: float = 0.05
    theta1_variant: str = "2eps"
    grid: GridRules = field(default_factory=GridRules)
    slices: SliceRules = field(default_factory=SliceRules)
    thresholds: Thresholds = field(default_factory=Thresholds)
    bands: RateBands = field(default_factory=RateBands)
    output_dir: str = "runs/default"
    workers: int = 1

    def __post_init__(self):
        eps = tuple(self.epsilons)
        if any(e <= 0 for e in eps):
            raise ValueError("epsilons must be positive")
        if list(eps) != sorted(eps, reverse=True) or len(set(eps)) != len(eps):
            raise ValueError("epsilon list must be strictly decreasing")
        if len(eps) < 3:
            raise ValueError("rate fits need at least 3 epsilons")
        for name in ("c2", "c3", "delta", "alpha0", "det_floor"):
            if getattr(self.thresholds, name) <= 0:
                raise ValueError(f"threshold {name} must be positive")
        object.__setattr__(self, "epsilons", eps)

    @property
    def T1(self):
        return self.T0 + self.T1_offset


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def config_from_dict(d):
    d = dict(d)
    for key, cls in (("grid", GridRules), ("slices", SliceRules),
                     ("thresholds", Thresholds), ("bands", RateBands)):
        if key in d and isinstance(d[key], dict):
            d[key] = cls(**d[key])
    if "epsilons" in d:
        d["epsilons"] = tuple(d["epsilons"])
    return RunConfig(**d)


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path):
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def resolve_output_dir(cfg):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(cfg.output_dir)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def scenario_loop(cfg):
    if cfg.scenario == "collapsing_circle":
        return geo.collapsing_circle_loop()
    if cfg.scenario == "wobbly":
        return geo.wobbly_loop()
    raise ValueError(f"unknown scenario {cfg.scenario!r}")


# ---------------------------------------------------------------------------
# per-epsilon pipeline
# ---------------------------------------------------------------------------

def build_run_chart(cfg, eps):
    """Chart whose evaluation range covers the snapshots this eps needs."""
    loop = scenario_loop(cfg)
    # provisional margin from a bare normal bound, then rebuild with the
    # actual snapshot horizon
    pad_guess = 0.35
    chart = geo.build_chart(loop, -cfg.T1, cfg.T1, rho=cfg.rho,
                            y0_margin=pad_guess, det_floor=cfg.thresholds.det_floor)
    nu0max = chart.max_normal_time_component(-cfg.T1, cfg.T1)
    duration = cfg.T1 + chart.rho * nu0max + 6 * cfg.grid.snap_per_eps * eps
    margin = duration - cfg.T1 + 0.05
    if margin > pad_guess:
        chart = geo.build_chart(loop, -cfg.T1, cfg.T1, rho=cfg.rho,
                                y0_margin=margin, det_floor=cfg.thresholds.det_floor)
    return chart, duration


def slice_grid(cfg):
    """Interior y0 sample points of (-T1, T1)."""
    return np.linspace(-cfg.T1, cfg.T1, cfg.slices.n_y0 + 2)[1:-1]


def simulate(cfg, eps, run_dir):
    """Evolve one eps from rest-free interface data; persist snapshots."""
    run_dir = Path(run_dir)
    t_wall = time.time()
    chart, duration = build_run_chart(cfg, eps)
    r_max = chart.max_spatial_radius(-duration, duration)
    grid = wave.make_grid_spec(
        eps, duration, r_max, points_per_eps=cfg.grid.points_per_eps,
        cfl_safety=cfg.grid.cfl_safety, dt_eps_cap=cfg.grid.dt_eps_cap,
        box_margin=cfg.grid.box_margin)
    stride = max(1, int(round(cfg.grid.snap_per_eps * eps / grid.dt)))
    n_levels = int(round(duration / grid.dt))

    u0, v0 = wave.initial_interface_state(chart, eps, grid, t0=0.0)
    energy0 = prepared_energy(u0, v0, grid, eps)

    snap_dir = run_dir / "snapshots"
    fwd = wave.make_field(u0.copy(), v0, grid, eps, direction=+1)
    nxt = wave.evolve_with_snapshots(fwd, snap_dir, stride, n_levels,
                                     start_index=0, include_initial=True)
    energy_fwd = fwd.total_energy()
    bwd = wave.make_field(u0.copy(), v0, grid, eps, direction=-1)
    wave.evolve_with_snapshots(bwd, snap_dir, stride, n_levels,
                               start_index=nxt, include_initial=False)
    energy_bwd = bwd.total_energy()

    meta = {
        "epsilon": eps, "h": grid.h, "dt": grid.dt, "L": grid.L, "n": grid.n,
        "duration": duration, "stride": stride, "rho": chart.rho,
        "energy_initial": energy0, "energy_forward_end": energy_fwd,
        "energy_backward_end": energy_bwd,
        "energy_drift_rel": max(abs(energy_fwd - energy0), abs(energy_bwd - energy0))
        / energy0,
        "wall_seconds": time.time() - t_wall,
    }
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "run_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return chart, meta


def prepared_energy(u0, v0, grid, eps):
    """Energy functional of initial data (health check against c0/eps * length)."""
    gx = np.diff(u0, axis=0) ** 2
    gy = np.diff(u0, axis=1) ** 2
    pot = (u0 ** 2 - 1.0) ** 2 / (2.0 * eps ** 2)
    static = 0.5 * (gx.sum() + gy.sum()) + pot.sum() * grid.h ** 2
    return float(np.sum(0.5 * v0 ** 2) * grid.h ** 2 + static)


@dataclass
class EpsilonReport:
    epsilon: float
    metrics: dict
    per_slice: list


def analyze(cfg, eps, run_dir, chart=None, field=None, store=None,
            far_field=True):
    """Diagnostics for one eps run (or an injected analytic/comparison field)."""
    run_dir = Path(run_dir)
    if chart is None:
        chart, _ = build_run_chart(cfg, eps)
    if field is None:
        if store is None:
            store = SnapshotStore.from_directory(run_dir / "snapshots")
        field = store

    rho = chart.rho
    y0s = slice_grid(cfg)
    z = profile.fiber_grid(rho, eps, cfg.slices.fiber_per_eps)
    n1 = cfg.slices.n_y1
    y1 = np.linspace(0, 2 * np.pi, n1, endpoint=False)
    proj_cfg = dec.ProjectionConfig(c3=cfg.thresholds.c3, delta=cfg.thresholds.delta)

    slices = []
    diags = []
    s_field = np.empty((len(y0s), n1))
    resid_field = np.empty_like(s_field)
    for i, y0 in enumerate(y0s):
        sl = diag.pullback(field, chart, y0, z, n1=n1)
        sd = diag.slice_thetas(sl, eps, theta1_variant=cfg.theta1_variant)
        s_row, resid_row, _, _, _ = dec.optimal_shift_batch(sl.v, z, eps, rho,
                                                            config=proj_cfg)
        s_field[i] = s_row
        resid_field[i] = resid_row
        sd.s_star = s_row.copy()
        slices.append(sl)
        diags.append(sd)

    comparison = dec.build_comparison(chart, y0s, y1, s_field, eps)

    # tube H1_eps of u - U and plain L2 of DU, both over |y0| <= T0
    in_window = np.abs(y0s) <= cfg.T0 + 1e-12
    w_sq = dw_sq = du_comp_sq = 0.0
    y0_weights = _trapezoid_weights(y0s[in_window])
    rows = np.flatnonzero(in_window)
    for k, i in enumerate(rows):
        sl = slices[i]
        wq = diag.tube_quadrature_weights(sl)
        V = comparison.evaluate_chart(
            np.full_like(sl.v, y0s[i]), np.broadcast_to(y1[:, None], sl.v.shape),
            np.broadcast_to(sl.y2[None, :], sl.v.shape))
        dV0, dV1, dV2 = comparison.chart_partials(
            np.full_like(sl.v, y0s[i]), np.broadcast_to(y1[:, None], sl.v.shape),
            np.broadcast_to(sl.y2[None, :], sl.v.shape))
        w = sl.v - V
        grad_w = diag.cartesian_gradient_sq(sl, sl.dv0 - dV0, sl.dv1 - dV1,
                                            sl.dv2 - dV2)
        grad_V = diag.cartesian_gradient_sq(sl, dV0, dV1, dV2)
        w_sq += y0_weights[k] * np.sum(wq * w ** 2)
        dw_sq += y0_weights[k] * np.sum(wq * grad_w)
        du_comp_sq += y0_weights[k] * np.sum(wq * grad_V)

    metrics = {
        "epsilon": eps,
        "rho": rho,
        "theta1_variant": cfg.theta1_variant,
        "sup_Theta1": max(d.Theta1 for d in diags),
        "sup_Theta2": max(d.Theta2 for d in diags),
        "sup_Theta3": max(d.Theta3 for d in diags),
        "tube_w_sq": w_sq,
        "tube_dw_sq": dw_sq,
        "DU_l2": float(np.sqrt(du_comp_sq)),
        "max_orth_residual": float(np.abs(resid_field).max()),
    }

    # shift-field Sobolev norm on S^1, sup over interior slices
    h1_vals = [dec.shift_h1_norm_sq(s_field, y0s, y1, row)
               for row in range(1, len(y0s) - 1)]
    metrics["sstar_h1_sup"] = float(np.sqrt(max(h1_vals)))
    metrics["sstar_sup_abs"] = float(np.abs(s_field).max())

    if far_field and hasattr(field, "ts"):
        far = diag.farfield_deviation(field, chart, -cfg.T0, cfg.T0, eps)
        metrics.update(_far_metrics(far, eps, w_sq, dw_sq))
    elif far_field:
        far = farfield_on_field(field, chart, -cfg.T0, cfg.T0, eps)
        metrics.update(_far_metrics(far, eps, w_sq, dw_sq))
    else:
        metrics["u_minus_U_h1eps"] = diag.h1eps_norm(w_sq, dw_sq, eps)

    meta_path = run_dir / "run_meta.json"
    if meta_path.exists():
        with open(meta_path) as fh:
            run_meta = json.load(fh)
        metrics["energy_drift_rel"] = run_meta["energy_drift_rel"]
        metrics["grid_h"] = run_meta["h"]

    _write_slice_outputs(run_dir, y0s, y1, diags, s_field, resid_field, metrics)
    return EpsilonReport(epsilon=eps, metrics=metrics,
                         per_slice=[dataclasses.asdict(_strip(d)) for d in diags])


def _far_metrics(far, eps, tube_w_sq, tube_dw_sq):
    return {
        "far_inside_sq": far.inside_sq,
        "far_outside_sq": far.outside_sq,
        "far_l2": far.inside_sq + far.outside_sq,
        "far_energy": far.energy,
        "u_minus_U_h1eps": diag.h1eps_norm(tube_w_sq + far.w_sq,
                                           tube_dw_sq + far.dw_sq, eps),
    }


def _strip(sd):
    return diag.SliceDiagnostics(y0=sd.y0, Theta1=sd.Theta1, Theta2=sd.Theta2,
                                 Theta3=sd.Theta3, theta1_fiber=None,
                                 theta2_fiber=None, s_star=None)


def _trapezoid_weights(xs):
    w = np.full(len(xs), xs[1] - xs[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def farfield_on_field(field, chart, t_lo, t_hi, eps, n_times=9, axis=None):
    """Far-field integrals for an injected field (no snapshot store).

    Samples a modest time grid; the injected comparison field is exactly
    +-1 there, so this mostly certifies the region bookkeeping.
    """
    if axis is None:
        r = chart.max_spatial_radius(t_lo, t_hi)
        axis = np.linspace(-(r + 0.3), r + 0.3, 257)
    cell = (axis[1] - axis[0]) ** 2
    times = np.linspace(t_lo, t_hi, n_times)
    tw = _trapezoid_weights(times)
    acc = np.zeros(5)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    for k, t in enumerate(times):
        m_in, m_out = diag.farfield_masks(chart, t, axis)
        far = m_in | m_out
        u = np.full(X.shape, np.nan)
        u[far] = field.evaluate(np.full(far.sum(), t), X[far], Y[far])
        ut, ux, uy = field.gradient(np.full(far.sum(), t), X[far], Y[far])
        grad_sq = ut ** 2 + ux ** 2 + uy ** 2
        w = cell * tw[k]
        acc[0] += w * np.sum((u[m_in] - 1.0) ** 2)
        acc[1] += w * np.sum((u[m_out] + 1.0) ** 2)
        acc[2] += w * np.sum(0.5 * eps * grad_sq + (u[far] ** 2 - 1.0) ** 2 / (2 * eps))
        acc[3] += w * (np.sum((u[m_in] - 1.0) ** 2) + np.sum((u[m_out] + 1.0) ** 2))
        acc[4] += w * np.sum(grad_sq)
    return diag.FarFieldReport(*acc)


def _write_slice_outputs(run_dir, y0s, y1, diags, s_field, resid_field, metrics):
    import csv
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "slices.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y0", "Theta1", "Theta2", "Theta3",
                         "sup_abs_s", "sup_abs_theta1_fiber", "sup_theta2_fiber"])
        for d in diags:
            writer.writerow([repr(d.y0), repr(d.Theta1), repr(d.Theta2),
                             repr(d.Theta3), repr(float(np.abs(d.s_star).max())),
                             repr(float(np.abs(d.theta1_fiber).max())),
                             repr(float(d.theta2_fiber.max()))])
    dec.write_shift_csv(run_dir / "sstar.csv", y0s, y1, s_field, resid_field)
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# rate fitting and the sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def fit_rate(pairs):
    """Least squares on (log eps, log value); needs >= 3 positive pairs."""
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if any(v <= 0 for _, v in pairs) or any(e <= 0 for e, _ in pairs):
        raise NonPositiveValue("rate fit requires positive epsilons and values")
    x = np.log([e for e, _ in pairs])
    y = np.log([v for _, v in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(float(slope), float(intercept), float(r2), len(pairs))


RATE_METRICS = ("sup_Theta1", "sup_Theta2", "sup_Theta3", "u_minus_U_h1eps",
                "sstar_h1_sup", "far_energy", "far_l2")


@dataclass
class SweepReport:
    config: RunConfig
    per_epsilon: dict          # eps -> metrics dict (or {"error": ...})
    rates: dict                # metric -> RateFit

    def metric_series(self, name):
        out = []
        for eps in self.config.epsilons:
            m = self.per_epsilon.get(eps)
            if m and "error" not in m and name in m:
                out.append((eps, m[name]))
        return out


def _run_one(cfg, eps, run_dir):
    chart, _ = simulate(cfg, eps, run_dir)
    return analyze(cfg, eps, run_dir, chart=chart).metrics


def run_sweep(cfg, emit=True):
    """Full sweep: simulate + analyze each eps, fit rates, emit the report.

    One failed eps is recorded and never blocks the others; with workers > 1
    the eps runs execute in separate processes and results are gathered in
    the configured epsilon order.
    """
    out_root = resolve_output_dir(cfg)
    out_root.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_root / "config.json")

    run_dirs = {eps: out_root / f"eps_{eps:.6g}" for eps in cfg.epsilons}
    per_eps = {}
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {eps: pool.submit(_run_one, cfg, eps, run_dirs[eps])
                       for eps in cfg.epsilons}
            for eps in cfg.epsilons:
                try:
                    per_eps[eps] = futures[eps].result()
                except (MinkwaveError, ValueError) as exc:
                    log.error("eps=%.4g failed: %s", eps, exc)
                    per_eps[eps] = {"error": f"{type(exc).__name__}: {exc}"}
    else:
        for eps in cfg.epsilons:
            try:
                per_eps[eps] = _run_one(cfg, eps, run_dirs[eps])
                log.info("eps=%.4g done: supTheta1=%s  |u-U|=%s", eps,
                         per_eps[eps].get("sup_Theta1"),
                         per_eps[eps].get("u_minus_U_h1eps"))
            except (MinkwaveError, ValueError) as exc:
                log.error("eps=%.4g failed: %s", eps, exc)
                per_eps[eps] = {"error": f"{type(exc).__name__}: {exc}"}

    rates = {}
    sweep = SweepReport(config=cfg, per_epsilon=per_eps, rates=rates)
    for name in RATE_METRICS:
        series = sweep.metric_series(name)
        if len(series) >= 3:
            try:
                rates[name] = fit_rate(series)
            except NonPositiveValue:
                log.warning("metric %s has non-positive values; no rate fitted", name)
    if emit:
        from .reporting import emit_report
        emit_report(sweep, out_root)
    return sweep


def gradient_ratio_check(sweep, tol=None):
    """Consecutive ||DU||_L2 ratios against sqrt(eps_i/eps_j)."""
    tol = sweep.config.bands.grad_ratio_tol if tol is None else tol
    series = sweep.metric_series("DU_l2")
    checks = []
    for (e1, v1), (e2, v2) in zip(series, series[1:]):
        expected = np.sqrt(e1 / e2)
        checks.append({"eps_pair": (e1, e2), "measured": v2 / v1,
                       "expected": expected,
                       "ok": abs(v2 / v1 - expected) <= tol * expected})
    return checks
