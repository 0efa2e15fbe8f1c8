"""Canonical modulation: project fibers onto translated truncated kinks.

For a fiber v on I = (-rho, rho), the modulation parameter s_* minimizes
phi(s) = ||v - tau_s Q_eps||_L2(I).  The minimizer is located by a coarse
scan, golden-section refinement on the provably convex basin, and one Newton
polish on eta' (eta = phi^2/2), whose vanishing is the orthogonality
relation int (v - tau_s Q) tau_s Q' = 0.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import profile
from .errors import HypothesisFailed, InsufficientSlices, NotUnique
from .numerics import diff2_periodic, periodic_trapezoid, simpson_weights


@dataclass
class DecompositionResult:
    s_star: float
    residual_orthogonality: float
    min_value: float           # phi(s_star)
    convexity_margin: float    # min sampled eta'' near s_star
    unique: bool


@dataclass(frozen=True)
class ProjectionConfig:
    c3: float = 0.1            # hypothesis: min phi <= c3 sqrt(eps)
    delta: float = 0.05        # convexity certificate probes at s_* +- 2 eps delta
    scan_halfwidth_factor: float = 0.5   # scan sigma in [-rho/2, rho/2]
    golden_tol_factor: float = 1e-4      # golden stops at |interval| < factor*eps


def _phi_sq_batch(z, v, sigmas, eps, rho, weights):
    """||v - tau_sigma Q||^2 for a batch of shifts (vectorized over sigma)."""
    shifted = profile.Q_eps(z[None, :] - sigmas[:, None], eps, rho)
    diff = v[None, :] - shifted
    return (diff * diff) @ weights


def _eta_derivatives_batch(z, V, s, eps, rho, weights):
    """(eta', eta'') for a batch of fibers V (nf, nz) at shifts s (nf,).

    eta'' = ||Q'||^2 - int (v - tau_s Q) Q''; Q'' by differencing the
    analytic Q'.
    """
    zs = z[None, :] - s[:, None]
    Q = profile.Q_eps(zs, eps, rho)
    Qp = profile.Q_eps_prime(zs, eps, rho)
    d = V - Q
    eta_p = (d * Qp) @ weights
    dz = 1e-6 * eps
    Qpp = (profile.Q_eps_prime(zs + dz, eps, rho)
           - profile.Q_eps_prime(zs - dz, eps, rho)) / (2 * dz)
    eta_pp = (Qp * Qp) @ weights - (d * Qpp) @ weights
    return eta_p, eta_pp


def eta_derivatives(z, v, s, eps, rho, weights):
    """(eta', eta'') at one shift; eta' is the orthogonality residual."""
    eta_p, eta_pp = _eta_derivatives_batch(
        z, np.asarray(v, dtype=float)[None, :], np.array([float(s)]),
        eps, rho, weights)
    return float(eta_p[0]), float(eta_pp[0])


def orthogonality_residual(z, v, s, eps, rho):
    """Simpson value of int_I (v - tau_s Q) tau_s Q' dz."""
    weights = simpson_weights(len(z), z[1] - z[0])
    return eta_derivatives(z, v, s, eps, rho, weights)[0]


def optimal_shift_batch(V, z, eps, rho, config=ProjectionConfig()):
    """optimal_shift for a whole batch of fibers at once (rows of V).

    The golden-section refinement runs in lockstep across fibers with
    array-valued brackets, so the per-iteration work is one vectorized
    profile evaluation.
    """
    z = np.asarray(z, dtype=float)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    nf = V.shape[0]
    dz = z[1] - z[0]
    weights = simpson_weights(len(z), dz)

    half = config.scan_halfwidth_factor * rho
    n_scan = max(9, int(np.ceil(2 * half / (eps / 8.0))) + 1)
    sigmas = np.linspace(-half, half, n_scan)
    shifted = profile.Q_eps(z[None, :] - sigmas[:, None], eps, rho)   # (ns, nz)
    diff = V[:, None, :] - shifted[None, :, :]
    phi_sq = np.einsum("fsz,z->fs", diff * diff, weights)
    i_min = np.argmin(phi_sq, axis=1)
    best = np.sqrt(np.maximum(phi_sq[np.arange(nf), i_min], 0.0))
    bound = config.c3 * np.sqrt(eps)
    if np.any(best > bound):
        bad = int(np.argmax(best))
        raise HypothesisFailed(
            f"no interface found on fiber {bad}: min ||v - tau Q|| = "
            f"{best[bad]:.3e} exceeds c3*sqrt(eps) = {bound:.3e}"
        )
    # competing minima within 1% of the best, separated by more than one cell
    near = phi_sq <= phi_sq[np.arange(nf), i_min][:, None] * 1.01 + 1e-300
    idx = np.arange(n_scan)[None, :]
    spread = (np.where(near, idx, -1).max(axis=1)
              - np.where(near, idx, n_scan).min(axis=1))
    ambiguous = spread > 2

    def phi_sq_at(s):
        sh = profile.Q_eps(z[None, :] - s[:, None], eps, rho)
        d = V - sh
        return (d * d) @ weights

    a = sigmas[np.maximum(i_min - 1, 0)]
    b = sigmas[np.minimum(i_min + 1, n_scan - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    fc, fd = phi_sq_at(c), phi_sq_at(d_)
    tol = config.golden_tol_factor * eps
    while np.max(b - a) > tol:
        take = fc < fd          # keep [a, d]; else keep [c, b]
        b = np.where(take, d_, b)
        a = np.where(take, a, c)
        new_c = b - invphi * (b - a)
        new_d = a + invphi * (b - a)
        probe = np.where(take, new_c, new_d)
        f_probe = phi_sq_at(probe)
        c, d_ = np.where(take, new_c, d_), np.where(take, c, new_d)
        fc, fd = np.where(take, f_probe, fd), np.where(take, fc, f_probe)
    s = 0.5 * (a + b)

    eta_p, eta_pp = _eta_derivatives_batch(z, V, s, eps, rho, weights)
    s = np.where(eta_pp > 0, s - eta_p / eta_pp, s)
    eta_p, eta_pp = _eta_derivatives_batch(z, V, s, eps, rho, weights)

    probe = 2.0 * eps * config.delta
    margins = np.minimum(
        eta_pp,
        np.minimum(_eta_derivatives_batch(z, V, s - probe, eps, rho, weights)[1],
                   _eta_derivatives_batch(z, V, s + probe, eps, rho, weights)[1]))
    unique = margins > 0
    if np.any(ambiguous & ~unique):
        bad = int(np.argmax(ambiguous & ~unique))
        raise NotUnique(
            f"competing projection minima on fiber {bad} near s={s[bad]:.4e} "
            "without a convexity certificate"
        )
    min_value = np.sqrt(np.maximum(phi_sq_at(s), 0.0))
    return s, eta_p, min_value, margins, unique


def optimal_shift(z, v, eps, rho, config=ProjectionConfig()):
    """Locate the unique L2-closest translate of the truncated kink.

    Raises HypothesisFailed when no scan shift comes within c3*sqrt(eps)
    (the fiber has no recognizable interface), NotUnique when competing scan
    minima survive and the convexity certificate fails.
    """
    s, eta_p, min_value, margins, unique = optimal_shift_batch(
        np.asarray(v, dtype=float)[None, :], z, eps, rho, config)
    return DecompositionResult(s_star=float(s[0]),
                               residual_orthogonality=float(eta_p[0]),
                               min_value=float(min_value[0]),
                               convexity_margin=float(margins[0]),
                               unique=bool(unique[0]))


def brute_force_shift(z, v, eps, rho, resolution=1e-5, halfwidth=None):
    """Dense-scan argmin oracle used to cross-check optimal_shift."""
    half = 0.5 * rho if halfwidth is None else halfwidth
    weights = simpson_weights(len(z), z[1] - z[0])
    sigmas = np.arange(-half, half + resolution, resolution)
    phi_sq = _phi_sq_batch(z, v, sigmas, eps, rho, weights)
    return float(sigmas[int(np.argmin(phi_sq))])


# ---------------------------------------------------------------------------
# assembled comparison field
# ---------------------------------------------------------------------------

class ComparisonField:
    """The interface ansatz built from the measured shift field.

    Inside the rho-tube U(t,x) = Q_eps(y2 - s(y0, y1)) with s interpolated
    bilinearly on the slice grid (periodic in y1); outside it is +-1 by the
    enclosed-region test.  Exposes the same batch interface as the snapshot
    store so the diagnostics can be driven by it directly.
    """

    def __init__(self, chart, y0_grid, y1_grid, s_field, eps,
                 ds_dy0=None, ds_dy1=None):
        self.chart = chart
        self.y0_grid = np.asarray(y0_grid, dtype=float)
        self.y1_grid = np.asarray(y1_grid, dtype=float)
        self.s_field = np.asarray(s_field, dtype=float)
        self.eps = float(eps)
        if ds_dy0 is None:
            ds_dy0 = (np.gradient(self.s_field, self.y0_grid, axis=0)
                      if len(self.y0_grid) > 1 else np.zeros_like(self.s_field))
        if ds_dy1 is None:
            dy1 = self.y1_grid[1] - self.y1_grid[0]
            ds_dy1 = diff2_periodic(self.s_field, dy1, axis=1)
        self.ds_dy0 = ds_dy0
        self.ds_dy1 = ds_dy1

    # -- shift field interpolation ------------------------------------------

    def shift_at(self, y0, y1):
        return _bilinear_periodic(self.s_field, self.y0_grid, self.y1_grid, y0, y1)

    def shift_grad_at(self, y0, y1):
        return (_bilinear_periodic(self.ds_dy0, self.y0_grid, self.y1_grid, y0, y1),
                _bilinear_periodic(self.ds_dy1, self.y0_grid, self.y1_grid, y0, y1))

    # -- field interface -------------------------------------------------------

    def evaluate_chart(self, y0, y1, y2):
        """V(y) = Q_eps(y2 - s(y0, y1)) directly in chart coordinates."""
        s = self.shift_at(y0, y1)
        return profile.Q_eps(y2 - s, self.eps, self.chart.rho)

    def chart_partials(self, y0, y1, y2):
        """(d0 V, d1 V, d2 V) in chart coordinates."""
        s = self.shift_at(y0, y1)
        ds0, ds1 = self.shift_grad_at(y0, y1)
        Qp = profile.Q_eps_prime(y2 - s, self.eps, self.chart.rho)
        return -Qp * ds0, -Qp * ds1, Qp

    def evaluate(self, t, x, y):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        y0, y1, y2, inside = self.chart.invert_chart(t, x, y)
        out = np.empty_like(t)
        tube = inside & (np.abs(y2) < self.chart.rho)
        if tube.any():
            out[tube] = self.evaluate_chart(y0[tube], y1[tube], y2[tube])
        rest = ~tube
        if rest.any():
            # group by time slice to reuse region polygons
            enc = np.empty(rest.sum(), dtype=bool)
            tr, xr, yr = t[rest], x[rest], y[rest]
            for tv in np.unique(tr):
                sel = tr == tv
                enc[sel] = self.chart.enclosed_region_test(float(tv), xr[sel], yr[sel])
            out[rest] = np.where(enc, 1.0, -1.0)
        return out

    def gradient(self, t, x, y):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        y0, y1, y2, inside = self.chart.invert_chart(t, x, y)
        ut = np.zeros_like(t)
        ux = np.zeros_like(t)
        uy = np.zeros_like(t)
        tube = inside & (np.abs(y2) < self.chart.rho)
        if tube.any():
            d0, d1, d2 = self.chart_partials(y0[tube], y1[tube], y2[tube])
            jac, _ = self.chart.chart_jacobian(y0[tube], y1[tube], y2[tube])
            inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
            cart = np.einsum("nij,nj->ni", inv_t, np.stack([d0, d1, d2], axis=-1))
            ut[tube], ux[tube], uy[tube] = cart[:, 0], cart[:, 1], cart[:, 2]
        return ut, ux, uy


def _bilinear_periodic(table, g0, g1, y0, y1):
    """Bilinear interpolation, clamped in y0 and periodic in y1."""
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    n0, n1 = table.shape
    if n0 == 1:
        i = np.zeros(y0.shape, dtype=int)
        fa = np.zeros_like(y0)
        ip = i
    else:
        step = g0[1] - g0[0]
        a = np.clip((y0 - g0[0]) / step, 0.0, n0 - 1.0)
        i = np.minimum(np.floor(a).astype(int), n0 - 2)
        fa = a - i
        ip = i + 1
    dy1 = g1[1] - g1[0]
    b = np.mod(y1 - g1[0], 2 * np.pi) / dy1
    j = np.floor(b).astype(int) % n1
    fb = b - np.floor(b)
    jp = (j + 1) % n1
    return ((1 - fa) * (1 - fb) * table[i, j] + (1 - fa) * fb * table[i, jp]
            + fa * (1 - fb) * table[ip, j] + fa * fb * table[ip, jp])


def build_comparison(chart, y0_grid, y1_grid, s_field, eps):
    """Assemble the comparison field from a measured shift table."""
    return ComparisonField(chart, y0_grid, y1_grid, s_field, eps)


# ---------------------------------------------------------------------------
# shift-field norms and persistence
# ---------------------------------------------------------------------------

def shift_h1_norm_sq(s_field, y0_grid, y1_grid, row):
    """int_{S^1} s^2 + (d_y0 s)^2 + (d_y1 s)^2 dy1 at slice `row`.

    Centered differences; needs both neighbors in y0.
    """
    n0 = len(y0_grid)
    if n0 < 3 or row == 0 or row == n0 - 1:
        raise InsufficientSlices("centered y0 stencil needs interior slice with neighbors")
    dy0 = y0_grid[row + 1] - y0_grid[row]
    ds0 = (s_field[row + 1] - s_field[row - 1]) / (2 * dy0)
    dy1 = y1_grid[1] - y1_grid[0]
    ds1 = diff2_periodic(s_field[row], dy1)
    return float(periodic_trapezoid(s_field[row] ** 2 + ds0 ** 2 + ds1 ** 2))


def write_shift_csv(path, y0_grid, y1_grid, s_field, residuals):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y0", "y1", "s_star", "residual"])
        for i, y0 in enumerate(y0_grid):
            for j, y1 in enumerate(y1_grid):
                writer.writerow([repr(float(y0)), repr(float(y1)),
                                 repr(float(s_field[i, j])),
                                 repr(float(residuals[i, j]))])
