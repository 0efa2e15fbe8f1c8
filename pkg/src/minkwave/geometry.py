"""Extremal surfaces in 2+1 Minkowski space and their normal coordinates.

A surface is generated from two unit-speed closed curves a, b : S^1 -> R^2 by
the d'Alembert parametrization

    psi(y0, y1) = (y0, (a(y0+y1) + b(y0-y1)) / 2),

which has vanishing Minkowski mean curvature whenever |a'| = |b'| = 1.  The
chart Psi(y0, y1, y2) = psi + y2 * nu moves along the Minkowski unit normal
nu (metric eta = diag(-1, +1, +1), eta(nu, nu) = +1, nu oriented toward the
enclosed region), so the y2 coordinate of the inverse chart is the signed
Minkowski distance to the surface.
"""

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from matplotlib.path import Path as MplPath
from scipy.spatial import cKDTree

from .errors import (
    ChartUnavailable,
    DegenerateTangents,
    NonUnitSpeed,
    SingularChart,
)
from .numerics import solve3x3_batch

log = logging.getLogger(__name__)

_ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


# ---------------------------------------------------------------------------
# Fourier loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierCurve:
    """Closed curve S^1 -> R^2 as a truncated Fourier series.

    c(s) = cos_coeffs[0] + sum_k cos_coeffs[k] cos(ks) + sin_coeffs[k] sin(ks),
    with coefficient arrays of shape (n_modes + 1, 2).
    """

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    def __post_init__(self):
        cc = np.atleast_2d(np.asarray(self.cos_coeffs, dtype=float))
        sc = np.atleast_2d(np.asarray(self.sin_coeffs, dtype=float))
        if cc.shape != sc.shape or cc.shape[1] != 2:
            raise ValueError("coefficient arrays must both have shape (n_modes+1, 2)")
        object.__setattr__(self, "cos_coeffs", cc)
        object.__setattr__(self, "sin_coeffs", sc)

    @property
    def n_modes(self):
        return self.cos_coeffs.shape[0] - 1

    def _eval(self, s, derivative=0):
        s = np.asarray(s, dtype=float)
        k = np.arange(self.cos_coeffs.shape[0], dtype=float)
        ks = np.multiply.outer(s, k)                        # (..., K)
        cos, sin = np.cos(ks), np.sin(ks)
        if derivative == 0:
            basis_c, basis_s = cos, sin
        elif derivative == 1:
            basis_c, basis_s = -k * sin, k * cos
        elif derivative == 2:
            basis_c, basis_s = -k * k * cos, -k * k * sin
        else:
            raise ValueError("derivative order must be 0, 1 or 2")
        return basis_c @ self.cos_coeffs + basis_s @ self.sin_coeffs

    def __call__(self, s):
        return self._eval(s, 0)

    def d1(self, s):
        return self._eval(s, 1)

    def d2(self, s):
        return self._eval(s, 2)


@dataclass(frozen=True)
class LoopPair:
    """The string data (a, b): two unit-speed closed curves."""

    a: FourierCurve
    b: FourierCurve
    tol_speed: float = 1e-10

    @property
    def n_modes(self):
        return max(self.a.n_modes, self.b.n_modes)


@dataclass(frozen=True)
class ValidationReport:
    max_dev_a: float
    max_dev_b: float
    tol: float

    @property
    def passed(self):
        return self.max_dev_a < self.tol and self.max_dev_b < self.tol


def validate_loop(loop, tol=None, n_samples=10_000):
    """Check |a'| = |b'| = 1 on a dense sample grid.

    Returns the report; callers that require valid string data raise
    NonUnitSpeed when it fails.
    """
    tol = loop.tol_speed if tol is None else tol
    s = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    dev_a = np.abs(np.linalg.norm(loop.a.d1(s), axis=-1) - 1.0).max()
    dev_b = np.abs(np.linalg.norm(loop.b.d1(s), axis=-1) - 1.0).max()
    return ValidationReport(float(dev_a), float(dev_b), tol)


def circle_curve(orientation=+1):
    """Unit circle traversed at unit speed; orientation flips the winding."""
    cc = np.zeros((2, 2))
    sc = np.zeros((2, 2))
    cc[1] = (1.0, 0.0)
    sc[1] = (0.0, float(orientation))
    return FourierCurve(cc, sc)


def collapsing_circle_loop():
    """a(s) = (cos s, sin s), b(s) = (cos s, -sin s): the collapsing circle."""
    return LoopPair(circle_curve(+1), circle_curve(-1), tol_speed=1e-10)


def reparametrize_unit_speed(curve, n_modes=32, n_samples=4096):
    """Rescale and reparametrize a smooth closed curve to unit speed.

    The curve is scaled so its total length is 2*pi, the parameter is replaced
    by arclength (monotone interpolation of the cumulative speed), and the
    result is re-expanded as a truncated Fourier series via FFT.
    """
    theta = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    dtheta = theta[1] - theta[0]
    speed = np.linalg.norm(curve.d1(theta), axis=-1)
    # cumulative arclength at the sample points (trapezoid, periodic closure)
    mids = 0.5 * (speed + np.roll(speed, -1)) * dtheta
    s_cum = np.concatenate([[0.0], np.cumsum(mids)])
    total = s_cum[-1]
    scale = 2 * np.pi / total
    # invert s(theta) on a uniform arclength grid
    s_targets = np.linspace(0.0, total, n_samples, endpoint=False)
    theta_ext = np.concatenate([theta, [2 * np.pi]])
    theta_of_s = np.interp(s_targets, s_cum, theta_ext)
    pts = scale * curve(theta_of_s)
    spec = np.fft.rfft(pts, axis=0) / n_samples
    k_max = min(n_modes, spec.shape[0] - 1)
    cc = np.zeros((k_max + 1, 2))
    sc = np.zeros((k_max + 1, 2))
    cc[0] = spec[0].real
    cc[1:] = 2 * spec[1:k_max + 1].real
    sc[1:] = -2 * spec[1:k_max + 1].imag
    return FourierCurve(cc, sc)


def wobbly_loop(amplitude=0.06, lobes=3, n_modes=32):
    """Perturbed-circle string data without rotational symmetry.

    The base shape has radius 1 + amplitude*cos(lobes*t); it is rescaled and
    reparametrized to unit speed.  b(s) = a(-s) makes the surface start at
    rest at y0 = 0.
    """
    k = lobes
    cc = np.zeros((k + 2, 2))
    sc = np.zeros((k + 2, 2))
    cc[1] = (1.0, 0.0)
    sc[1] = (0.0, 1.0)
    # cos(kt)cos t = (cos(k+1)t + cos(k-1)t)/2, cos(kt)sin t = (sin(k+1)t - sin(k-1)t)/2
    cc[k + 1] += (amplitude / 2, 0.0)
    cc[k - 1] += (amplitude / 2, 0.0)
    sc[k + 1] += (0.0, amplitude / 2)
    sc[k - 1] += (0.0, -amplitude / 2)
    raw = FourierCurve(cc, sc)
    a = reparametrize_unit_speed(raw, n_modes=n_modes)
    b = FourierCurve(a.cos_coeffs, -a.sin_coeffs)  # b(s) = a(-s)
    return LoopPair(a, b, tol_speed=1e-6)


# ---------------------------------------------------------------------------
# Chart points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartPoint:
    y0: float
    y1: float
    y2: float
    inside_tube: bool


# ---------------------------------------------------------------------------
# The chart
# ---------------------------------------------------------------------------

@dataclass
class SurfaceChart:
    """Normal coordinates around an extremal surface.

    `T1_minus`/`T1_plus` bound the diagnostic window where the map is
    certified to be a diffeomorphism on the full (-2 rho, 2 rho) aperture.
    `y0_min`/`y0_max` is the (wider) range over which the chart may be
    evaluated, with a pointwise Jacobian guard.  After construction the chart
    is immutable; evaluations and inversions are pure.
    """

    loop: LoopPair
    T1_minus: float
    T1_plus: float
    rho: float
    y0_min: float
    y0_max: float
    orientation_sign: float
    det_floor: float = 1e-6
    _seed_tree: object = field(default=None, repr=False)
    _seed_points: np.ndarray = field(default=None, repr=False)

    # -- raw surface quantities -------------------------------------------

    def surface_point(self, y0, y1):
        """psi(y0, y1) = (y0, (a(y0+y1) + b(y0-y1))/2) in R^{1+2}."""
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        vec = 0.5 * (self.loop.a(y0 + y1) + self.loop.b(y0 - y1))
        return np.stack([np.broadcast_to(y0, vec.shape[:-1]), vec[..., 0], vec[..., 1]], axis=-1)

    def _tangents(self, y0, y1):
        u = np.asarray(y0, dtype=float) + np.asarray(y1, dtype=float)
        v = np.asarray(y0, dtype=float) - np.asarray(y1, dtype=float)
        da_u, db_v = self.loop.a.d1(u), self.loop.b.d1(v)
        t0 = 0.5 * (da_u + db_v)      # d psi_vec / d y0
        t1 = 0.5 * (da_u - db_v)      # d psi_vec / d y1
        d2a, d2b = self.loop.a.d2(u), self.loop.b.d2(v)
        t0_d0 = 0.5 * (d2a + d2b)
        t0_d1 = 0.5 * (d2a - d2b)
        return t0, t1, t0_d0, t0_d1

    def minkowski_normal(self, y0, y1, with_derivatives=False):
        """Minkowski unit normal nu = (nu0, nu_vec), oriented inward.

        Solving eta(nu, d0 psi) = eta(nu, d1 psi) = 0 with d0 psi = (1, t0)
        and d1 psi = (0, t1) gives nu_vec parallel to rot90(t1) and
        nu0 = nu_vec . t0; eta(nu, nu) = 1 fixes the scale.
        """
        t0, t1, t0_d0, t0_d1 = self._tangents(y0, y1)
        p = t1 @ _ROT90.T
        pdt0 = np.asarray(np.sum(p * t0, axis=-1))
        g = np.asarray(np.sum(p * p, axis=-1) - pdt0 ** 2)
        if np.any(g <= 0):
            raise DegenerateTangents(
                "surface tangents do not span a timelike plane on the sampled set"
            )
        lam = np.asarray(self.orientation_sign / np.sqrt(g))
        nu0 = np.asarray(lam * pdt0)
        nu_vec = lam[..., None] * p
        nu = np.concatenate([nu0[..., None], nu_vec], axis=-1)
        if not with_derivatives:
            return nu

        # chain rule through p = rot90(t1), lambda = sign / sqrt(g)
        p_d0 = t0_d1 @ _ROT90.T            # d t1/d y0 = t0_d1 by symmetry of mixed parts
        p_d1 = t0_d0 @ _ROT90.T
        dnu = []
        for p_d, t0_d in ((p_d0, t0_d0), (p_d1, t0_d1)):
            pdt0_d = np.asarray(np.sum(p_d * t0, axis=-1) + np.sum(p * t0_d, axis=-1))
            g_d = 2 * np.sum(p * p_d, axis=-1) - 2 * pdt0 * pdt0_d
            lam_d = np.asarray(-0.5 * self.orientation_sign * g_d / g ** 1.5)
            nu0_d = np.asarray(lam_d * pdt0 + lam * pdt0_d)
            nuv_d = lam_d[..., None] * p + lam[..., None] * p_d
            dnu.append(np.concatenate([nu0_d[..., None], nuv_d], axis=-1))
        return nu, dnu[0], dnu[1]

    def chart_map(self, y0, y1, y2, check_aperture=True):
        """Psi(y) = psi(y0, y1) + y2 * nu(y0, y1)."""
        y2 = np.asarray(y2, dtype=float)
        if check_aperture and np.any(np.abs(y2) >= 2 * self.rho):
            from .errors import OutOfTube
            raise OutOfTube(f"|y2| must stay below 2*rho = {2 * self.rho}")
        psi = self.surface_point(y0, y1)
        nu = self.minkowski_normal(y0, y1)
        return psi + y2[..., None] * nu

    def chart_jacobian(self, y0, y1, y2):
        """Columns d Psi/d y_i from analytic loop derivatives; also det."""
        y2 = np.asarray(y2, dtype=float)
        t0, t1, _, _ = self._tangents(y0, y1)
        nu, nu_d0, nu_d1 = self.minkowski_normal(y0, y1, with_derivatives=True)
        ones = np.ones(np.shape(nu[..., 0]))
        col0 = np.concatenate([ones[..., None], t0], axis=-1) + y2[..., None] * nu_d0
        col1 = np.concatenate([np.zeros_like(ones)[..., None], t1], axis=-1) + y2[..., None] * nu_d1
        col2 = nu
        jac = np.stack([col0, col1, col2], axis=-1)
        det = np.linalg.det(jac)
        return jac, det

    # -- inversion ---------------------------------------------------------

    def _ensure_seeds(self):
        if self._seed_tree is not None:
            return
        ny0 = max(33, int((self.y0_max - self.y0_min) / 0.02))
        y0 = np.linspace(self.y0_min, self.y0_max, ny0)
        y1 = np.linspace(0.0, 2 * np.pi, 48, endpoint=False)
        y2 = np.linspace(-1.9 * self.rho, 1.9 * self.rho, 9)
        Y0, Y1, Y2 = np.meshgrid(y0, y1, y2, indexing="ij")
        pts = np.stack([Y0.ravel(), Y1.ravel(), Y2.ravel()], axis=-1)
        mapped = self.chart_map(pts[:, 0], pts[:, 1], pts[:, 2], check_aperture=False)
        _, det = self.chart_jacobian(pts[:, 0], pts[:, 1], pts[:, 2])
        ok = np.abs(det) > self.det_floor
        self._seed_points = pts[ok]
        self._seed_tree = cKDTree(mapped[ok])

    def invert_chart(self, t, x1, x2, tol=1e-12, max_iter=50, return_arrays=False):
        """Invert Psi at (t, x); Newton from the nearest cached seed.

        Scalar inputs return a ChartPoint; with return_arrays=True (or array
        inputs) returns (y0, y1, y2, inside) arrays.  Points where Newton
        fails, lands outside the aperture, or hits a near-singular Jacobian
        are classified outside the tube; failures are counted in the log.
        """
        scalar = np.isscalar(t) and np.isscalar(x1) and np.isscalar(x2)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        target = np.stack([t, x1, x2], axis=-1)
        self._ensure_seeds()
        _, idx = self._seed_tree.query(target, k=1)
        y = self._seed_points[idx].copy()

        active = np.ones(len(y), dtype=bool)
        bad = np.zeros(len(y), dtype=bool)
        for _ in range(max_iter):
            if not active.any():
                break
            ya = y[active]
            res = self.chart_map(ya[:, 0], ya[:, 1], ya[:, 2], check_aperture=False) - target[active]
            done = np.linalg.norm(res, axis=-1) < tol
            jac, det = self.chart_jacobian(ya[:, 0], ya[:, 1], ya[:, 2])
            sing = np.abs(det) < self.det_floor
            step = np.zeros_like(ya)
            good = ~sing
            if good.any():
                step[good] = solve3x3_batch(jac[good], -res[good])
            # clamp to keep Newton in the chart's validity region
            ya = ya + np.clip(step, -0.5, 0.5)
            ya[:, 2] = np.clip(ya[:, 2], -2.2 * self.rho, 2.2 * self.rho)
            ya[:, 0] = np.clip(ya[:, 0], self.y0_min, self.y0_max)
            y[active] = ya
            idx_active = np.flatnonzero(active)
            bad[idx_active[sing]] = True
            still = ~(done | sing)
            active[idx_active] = still

        final = self.chart_map(y[:, 0], y[:, 1], y[:, 2], check_aperture=False)
        resid = np.linalg.norm(final - target, axis=-1)
        converged = resid < 1e-10
        n_diverged = int(np.sum(~converged & ~bad))
        if n_diverged:
            log.debug("chart inversion: %d point(s) treated as outside (no convergence)",
                      n_diverged)
        inside = converged & ~bad & (np.abs(y[:, 2]) < 2 * self.rho)
        y[:, 1] = np.mod(y[:, 1], 2 * np.pi)
        if scalar and not return_arrays:
            return ChartPoint(float(y[0, 0]), float(y[0, 1]), float(y[0, 2]), bool(inside[0]))
        return y[:, 0], y[:, 1], y[:, 2], inside

    # -- region machinery ----------------------------------------------------

    def slice_polygon(self, t, y2_offset=0.0, n=512):
        """Closed curve bounding {signed distance = y2_offset} at time t.

        For y2_offset = 0 this is the interface slice Gamma_t itself (the
        constant-y0 slice of psi, since psi^0 = y0).  Otherwise the base
        parameter solves t = y0 + y2_offset * nu0(y0, y1) per ray.
        """
        y1 = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        if y2_offset == 0.0:
            if not (self.y0_min <= t <= self.y0_max):
                raise ChartUnavailable(f"t={t} outside chart range")
            pts = self.surface_point(np.full(n, float(t)), y1)
            return pts[:, 1:]
        lo = np.full(n, self.y0_min)
        hi = np.full(n, self.y0_max)

        def f(y0):
            nu0 = self.minkowski_normal(y0, y1)[..., 0]
            return y0 + y2_offset * nu0 - t

        flo, fhi = f(lo), f(hi)
        if np.any(flo * fhi > 0):
            raise ChartUnavailable(
                f"offset surface y2={y2_offset} does not reach t={t} inside the chart"
            )
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            take_lo = flo * fm <= 0
            hi = np.where(take_lo, mid, hi)
            lo = np.where(take_lo, lo, mid)
            flo = np.where(take_lo, flo, fm)
        y0 = 0.5 * (lo + hi)
        pts = self.chart_map(y0, y1, np.full(n, float(y2_offset)), check_aperture=False)
        return pts[:, 1:]

    def enclosed_region_test(self, t, x1, x2, polygon_points=2048):
        """True where (t, x) lies in the bounded component enclosed by Gamma_t."""
        scalar = np.isscalar(x1) and np.isscalar(x2)
        poly = self.slice_polygon(float(t), 0.0, n=polygon_points)
        inside = polygon_contains(
            poly,
            np.atleast_1d(np.asarray(x1, dtype=float)).ravel(),
            np.atleast_1d(np.asarray(x2, dtype=float)).ravel())
        if scalar:
            return bool(inside[0])
        return inside.reshape(np.shape(x1))

    # -- scalar geometry reports ----------------------------------------------

    def min_abs_det(self, y0_lo, y0_hi, y2_half_width, n=(48, 64, 33)):
        """Sampled min |det DPsi|; a sign change anywhere counts as 0 (fold)."""
        y0 = np.linspace(y0_lo, y0_hi, n[0])
        y1 = np.linspace(0, 2 * np.pi, n[1], endpoint=False)
        y2 = np.linspace(-y2_half_width, y2_half_width, n[2])
        Y0, Y1, Y2 = np.meshgrid(y0, y1, y2, indexing="ij")
        _, det = self.chart_jacobian(Y0.ravel(), Y1.ravel(), Y2.ravel())
        if det.min() < 0.0 < det.max():
            return 0.0
        return float(np.abs(det).min())

    def max_normal_time_component(self, y0_lo, y0_hi, n=(48, 128)):
        y0 = np.linspace(y0_lo, y0_hi, n[0])
        y1 = np.linspace(0, 2 * np.pi, n[1], endpoint=False)
        Y0, Y1 = np.meshgrid(y0, y1, indexing="ij")
        nu = self.minkowski_normal(Y0.ravel(), Y1.ravel())
        return float(np.abs(nu[:, 0]).max())

    def max_spatial_radius(self, y0_lo, y0_hi, n=(48, 128)):
        y0 = np.linspace(y0_lo, y0_hi, n[0])
        y1 = np.linspace(0, 2 * np.pi, n[1], endpoint=False)
        Y0, Y1 = np.meshgrid(y0, y1, indexing="ij")
        psi = self.surface_point(Y0.ravel(), Y1.ravel())
        nu = self.minkowski_normal(Y0.ravel(), Y1.ravel())
        r_surf = np.linalg.norm(psi[:, 1:], axis=-1)
        reach = 2 * self.rho * np.linalg.norm(nu[:, 1:], axis=-1)
        return float((r_surf + reach).max())

    def export_table(self, path, n_y0=25, n_y1=64):
        """Debug CSV of surface samples, normals and the on-surface Jacobian."""
        y0 = np.linspace(self.T1_minus, self.T1_plus, n_y0)
        y1 = np.linspace(0, 2 * np.pi, n_y1, endpoint=False)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["y0", "y1", "psi0", "psi1", "psi2",
                             "nu0", "nu1", "nu2", "detDPsi"])
            for a in y0:
                psi = self.surface_point(np.full_like(y1, a), y1)
                nu = self.minkowski_normal(np.full_like(y1, a), y1)
                _, det = self.chart_jacobian(np.full_like(y1, a), y1, np.zeros_like(y1))
                for i in range(n_y1):
                    writer.writerow([repr(a), repr(y1[i]),
                                     *(repr(v) for v in psi[i]),
                                     *(repr(v) for v in nu[i]),
                                     repr(det[i])])


def polygon_contains(poly, x, y):
    """Membership test for a closed polygon, vectorized over points.

    Star-shaped polygons (w.r.t. their centroid) use a polar radius table,
    which is orders of magnitude faster than the generic even-odd test; any
    other shape falls back to matplotlib's path machinery.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    cx, cy = poly.mean(axis=0)
    px, py = poly[:, 0] - cx, poly[:, 1] - cy
    th = np.arctan2(py, px)
    dth = np.diff(np.unwrap(th))
    if np.all(dth > 0) or np.all(dth < 0):
        order = np.argsort(th)
        r_at = np.interp(np.arctan2(y - cy, x - cx), th[order],
                         np.hypot(px, py)[order], period=2 * np.pi)
        return np.hypot(x - cx, y - cy) <= r_at
    return MplPath(poly).contains_points(np.stack([x, y], axis=-1))


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def min_curvature_radius(loop, y0_lo, y0_hi, n=(48, 256)):
    """Smallest spatial curvature radius of the constant-y0 slices."""
    y0 = np.linspace(y0_lo, y0_hi, n[0])
    y1 = np.linspace(0, 2 * np.pi, n[1], endpoint=False)
    Y0, Y1 = np.meshgrid(y0, y1, indexing="ij")
    u = Y0 + Y1
    v = Y0 - Y1
    d1 = 0.5 * (loop.a.d1(u) - loop.b.d1(v))        # curve tangent along y1
    d2 = 0.5 * (loop.a.d2(u) + loop.b.d2(v))
    cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    speed = np.linalg.norm(d1, axis=-1)
    kappa = np.abs(cross) / np.maximum(speed, 1e-300) ** 3
    return float(1.0 / kappa.max())


def _bare_chart(loop, y0_lo, y0_hi, rho=0.1, sign=1.0, det_floor=1e-6):
    return SurfaceChart(loop=loop, T1_minus=y0_lo, T1_plus=y0_hi, rho=rho,
                        y0_min=y0_lo, y0_max=y0_hi, orientation_sign=sign,
                        det_floor=det_floor)


def _orientation_sign(loop, y0_lo, y0_hi):
    """Pick the sign that makes the normal point into the enclosed region."""
    probe = _bare_chart(loop, y0_lo, y0_hi, sign=1.0)
    y0_ref = 0.5 * (y0_lo + y0_hi)
    delta = 1e-3
    pt = probe.chart_map(np.array([y0_ref]), np.array([0.0]), np.array([delta]),
                         check_aperture=False)[0]
    inside = probe.enclosed_region_test(float(pt[0]), pt[1], pt[2], polygon_points=1024)
    return 1.0 if inside else -1.0


def build_chart(loop, T1_minus, T1_plus, rho=None, y0_margin=0.0,
                det_floor=1e-6, validate=True):
    """Construct a chart, resolving rho and certifying the diffeomorphism.

    rho defaults to a quarter of the smallest spatial curvature radius over
    the run and is shrunk (factor 0.8) until min |det DPsi| over the
    diagnostic window times (-2 rho, 2 rho) clears `det_floor`.  The wider
    evaluation range [T1_minus - y0_margin, T1_plus + y0_margin] is checked
    on the (-rho, rho) aperture actually used there.
    """
    if validate:
        report = validate_loop(loop)
        if not report.passed:
            raise NonUnitSpeed(report)
    y0_min = T1_minus - y0_margin
    y0_max = T1_plus + y0_margin
    sign = _orientation_sign(loop, y0_min, y0_max)
    if rho is None:
        rho = 0.25 * min_curvature_radius(loop, y0_min, y0_max)
    chart = SurfaceChart(loop=loop, T1_minus=T1_minus, T1_plus=T1_plus, rho=float(rho),
                         y0_min=y0_min, y0_max=y0_max, orientation_sign=sign,
                         det_floor=det_floor)
    for _ in range(60):
        ok_diag = chart.min_abs_det(T1_minus, T1_plus, 2 * chart.rho) > det_floor
        ok_ext = chart.min_abs_det(y0_min, y0_max, 1.05 * chart.rho) > det_floor
        if ok_diag and ok_ext:
            if chart.rho != rho:
                log.info("tube half-width shrunk to rho=%.4f to keep the chart "
                         "a diffeomorphism", chart.rho)
            return chart
        chart = replace(chart, rho=0.8 * chart.rho, _seed_tree=None, _seed_points=None)
    raise SingularChart(
        "no tube half-width with a nonsingular chart was found; "
        "the surface may be degenerate or the time window too long"
    )
