"""Leapfrog solver for u_tt - Lap(u) + (2/eps^2)(u^2 - 1)u = 0 on a 2D box.

Explicit leapfrog with the 5-point Laplacian: nondissipative and 2nd order,
which is all the rate measurements need.  The box is sized by finite
propagation speed so the frozen boundary ring is never reached by dynamics;
for interface data the ring value is -1.  Runs can march forward or backward
in time (the equation is reversible), which lets the harness start every run
at t = 0 where the chart is healthiest.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import profile
from .errors import BlowUp, ChartUnavailable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Uniform Cartesian grid on [-L, L]^2 with leapfrog time step.

    Invariants: dt <= min(cfl_safety*h/sqrt(2), dt_eps_cap*eps) (stability of
    the stiff leapfrog), h <= eps/8 (profile resolution), and L >= r_max +
    run duration + margin (finite propagation speed keeps the boundary ring
    inert).
    """

    L: float
    h: float
    dt: float
    t_start: float
    t_end: float
    epsilon: float
    cfl_safety: float = 0.5
    dt_eps_cap: float = 0.2
    r_max: float = 0.0
    box_margin: float = 0.5

    def __post_init__(self):
        dt_max = min(self.cfl_safety * self.h / np.sqrt(2.0), self.dt_eps_cap * self.epsilon)
        if self.dt > dt_max * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds stability bound {dt_max}")
        if self.h > self.epsilon / 8 * (1 + 1e-12):
            raise ValueError(f"h={self.h} too coarse for epsilon={self.epsilon} (need h <= eps/8)")
        need = self.r_max + (self.t_end - self.t_start) + self.box_margin
        if self.L < need * (1 - 1e-12):
            raise ValueError(f"box half-width L={self.L} below propagation bound {need}")

    @property
    def n(self):
        """Points per axis; odd so the grid contains the origin exactly."""
        return 2 * int(round(self.L / self.h)) + 1

    @property
    def axis(self):
        half = (self.n - 1) // 2
        return np.arange(-half, half + 1) * self.h


def make_grid_spec(epsilon, duration, r_max, points_per_eps=8,
                   cfl_safety=0.5, dt_eps_cap=0.2, box_margin=0.5):
    """Resolve grid parameters for one run of the given duration from t=0."""
    h = epsilon / points_per_eps
    L_need = r_max + duration + box_margin
    n_half = int(np.ceil(L_need / h))
    L = n_half * h
    dt_max = min(cfl_safety * h / np.sqrt(2.0), dt_eps_cap * epsilon)
    n_steps = int(np.ceil(duration / dt_max))
    dt = duration / n_steps
    return GridSpec(L=L, h=h, dt=dt, t_start=0.0, t_end=duration, epsilon=epsilon,
                    cfl_safety=cfl_safety, dt_eps_cap=dt_eps_cap,
                    r_max=r_max, box_margin=box_margin)


@dataclass
class SpacetimeField:
    """Two consecutive time levels of the discrete field.

    `time_sign` is +1 for a forward march and -1 for a backward one; the
    leapfrog update itself is time symmetric.
    """

    u_prev: np.ndarray
    u_curr: np.ndarray
    t_curr: float
    grid: GridSpec
    epsilon: float
    time_sign: int = +1
    guard: float = 1.5
    periodic_y: bool = False   # pseudo-1D strips wrap the second axis

    def laplacian(self, u):
        out = np.zeros_like(u)
        h2 = self.grid.h ** 2
        if self.periodic_y:
            uy = np.roll(u, 1, axis=1) + np.roll(u, -1, axis=1)
            out[1:-1, :] = (u[2:, :] + u[:-2, :] + uy[1:-1, :]
                            - 4.0 * u[1:-1, :]) / h2
        else:
            out[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
                               - 4.0 * u[1:-1, 1:-1]) / h2
        return out

    def acceleration(self, u):
        return self.laplacian(u) - (2.0 / self.epsilon ** 2) * (u * u - 1.0) * u

    def step(self):
        """One leapfrog update; the boundary ring keeps its current values."""
        dt2 = self.grid.dt ** 2
        u_next = 2.0 * self.u_curr - self.u_prev + dt2 * self.acceleration(self.u_curr)
        _freeze_ring(u_next, self.u_curr, self.periodic_y)
        self.u_prev = self.u_curr
        self.u_curr = u_next
        self.t_curr += self.time_sign * self.grid.dt
        m = float(np.abs(self.u_curr).max())
        if m > self.guard:
            raise BlowUp(self.t_curr, m)
        return self

    def total_energy(self):
        """Discrete energy at the half step between the two stored levels.

        Kinetic term from the centered time difference; gradient and
        potential terms averaged symmetrically between the levels, the
        combination leapfrog conserves up to the nonlinearity.
        """
        h, dt = self.grid.h, self.grid.dt
        up, uc = self.u_prev, self.u_curr
        udot2 = ((uc - up) / dt) ** 2
        gx = (uc[1:, :] - uc[:-1, :]) * (up[1:, :] - up[:-1, :]) / h ** 2
        gy = (uc[:, 1:] - uc[:, :-1]) * (up[:, 1:] - up[:, :-1]) / h ** 2
        pot = 0.5 * ((uc ** 2 - 1.0) ** 2 + (up ** 2 - 1.0) ** 2) / (2.0 * self.epsilon ** 2)
        total = 0.5 * udot2.sum() + 0.5 * (gx.sum() + gy.sum()) + pot.sum()
        return float(total * h * h)


def _freeze_ring(u_new, u_old, periodic_y=False):
    u_new[0, :] = u_old[0, :]
    u_new[-1, :] = u_old[-1, :]
    if not periodic_y:
        u_new[:, 0] = u_old[:, 0]
        u_new[:, -1] = u_old[:, -1]


def make_field(u0, v0, grid, epsilon, t0=0.0, direction=+1, guard=1.5,
               periodic_y=False):
    """Field ready to march: second level from a 2nd-order Taylor start."""
    field = SpacetimeField(u_prev=u0, u_curr=u0, t_curr=t0, grid=grid,
                           epsilon=epsilon, time_sign=direction, guard=guard,
                           periodic_y=periodic_y)
    u1 = u0 + direction * grid.dt * v0 + 0.5 * grid.dt ** 2 * field.acceleration(u0)
    _freeze_ring(u1, u0, periodic_y)
    field.u_prev = u0
    field.u_curr = u1
    field.t_curr = t0 + direction * grid.dt
    return field


def initial_interface_state(chart, epsilon, grid, t0=0.0, rho=None,
                            velocity_probe=None):
    """Well-prepared interface data u = Q_eps(d), du/dt = Q_eps'(d) * d_t d.

    d is the signed Minkowski distance (the y2 chart coordinate) where the
    truncated profile is nontrivial; beyond its support the field is exactly
    +-1 by the enclosed-region test.  d_t d comes from centered differencing
    of the chart inversion.  Returns (u0, v0) on the grid.
    """
    rho = chart.rho if rho is None else rho
    if not (chart.y0_min < t0 < chart.y0_max):
        raise ChartUnavailable(f"t0={t0} outside chart coverage "
                               f"({chart.y0_min}, {chart.y0_max})")
    ax = grid.axis
    X, Y = np.meshgrid(ax, ax, indexing="ij")

    # the profile is exactly +-1 once |d| >= 2*rho/3; resolve d only on a band
    from .geometry import polygon_contains
    band_width = min(2.0 * rho / 3.0 + 6.0 * epsilon, 1.9 * rho)
    inner = chart.slice_polygon(t0, +band_width)
    outer = chart.slice_polygon(t0, -band_width)
    in_inner = polygon_contains(inner, X.ravel(), Y.ravel())
    in_outer = polygon_contains(outer, X.ravel(), Y.ravel())
    band = in_outer & ~in_inner

    u = np.where(in_inner.reshape(X.shape), 1.0, -1.0)
    v = np.zeros_like(u)

    xb = X.ravel()[band]
    yb = Y.ravel()[band]
    tb = np.full_like(xb, t0)
    _, _, d0, ok = chart.invert_chart(tb, xb, yb)
    if not ok.all():
        # stragglers just outside the aperture keep their region sign
        enclosed = chart.enclosed_region_test(t0, xb[~ok], yb[~ok])
        d0 = d0.copy()
        d0[~ok] = np.where(enclosed, 2 * rho, -2 * rho)
    delta = velocity_probe if velocity_probe is not None else min(0.01, 4 * grid.dt)
    _, _, dp, okp = chart.invert_chart(tb + delta, xb, yb)
    _, _, dm, okm = chart.invert_chart(tb - delta, xb, yb)
    ddt = np.where(okp & okm, (dp - dm) / (2 * delta), 0.0)

    flat_u = u.ravel()
    flat_v = v.ravel()
    flat_u[band] = profile.Q_eps(d0, epsilon, rho)
    flat_v[band] = profile.Q_eps_prime(d0, epsilon, rho) * ddt
    return flat_u.reshape(X.shape), flat_v.reshape(X.shape)


def prepare_initial_data(chart, epsilon, grid, t0=0.0, rho=None):
    """Forward-ready field with well-prepared interface data; also returns v0."""
    u0, v0 = initial_interface_state(chart, epsilon, grid, t0=t0, rho=rho)
    return make_field(u0, v0, grid, epsilon, t0=t0, direction=+1), v0


def write_snapshot(directory, u, t, grid, epsilon, index):
    """Persist one time level: raw .npy array plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"snap_{index:06d}"
    np.save(directory / f"{stem}.npy", np.ascontiguousarray(u))
    meta = {"t": float(t), "h": float(grid.h), "L": float(grid.L),
            "epsilon": float(epsilon), "nx": int(u.shape[0]), "ny": int(u.shape[1])}
    with open(directory / f"{stem}.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True)
    return directory / f"{stem}.npy"


def evolve_with_snapshots(field, directory, stride, n_levels, start_index=0,
                          include_initial=True):
    """March the field to level `n_levels`, persisting every stride-th level.

    Level m sits at t = t0 + time_sign*m*dt; the field enters at level 1.
    Returns the next free snapshot index.
    """
    grid = field.grid
    t0 = field.t_curr - field.time_sign * grid.dt
    idx = start_index
    if include_initial:
        write_snapshot(directory, field.u_prev, t0, grid, field.epsilon, idx)
        idx += 1
    m = 1
    if m % stride == 0:
        write_snapshot(directory, field.u_curr, field.t_curr, grid, field.epsilon, idx)
        idx += 1
    while m < n_levels:
        field.step()
        m += 1
        if m % stride == 0:
            write_snapshot(directory, field.u_curr, field.t_curr, grid, field.epsilon, idx)
            idx += 1
    return idx
