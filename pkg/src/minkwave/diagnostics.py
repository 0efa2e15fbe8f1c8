"""Pullback of the solution to normal coordinates and the measured functionals.

A slice fixes y0 and samples v(y0, y1, y2) = u(Psi(y)) on an (S^1 x fiber)
grid.  Fiber functionals theta1/theta2 and the slice functionals
Theta1/Theta2/Theta3 are quadratures of the weighted interface energies;
Simpson in y2, periodic trapezoid in y1.

Theta1 supports two potential weights behind `theta1_variant`: "2eps"
(default; the 1/(2 eps) weight that makes Theta1 exactly the y1-integral of
the fiber excess and keeps the c0 normalization meaningful) and "2eps2"
(a 1/(2 eps^2) variant kept for comparison runs).
"""

from dataclasses import dataclass

import numpy as np

from .numerics import periodic_trapezoid, simpson, simpson_weights
from .profile import c0

THETA1_VARIANTS = ("2eps", "2eps2")


@dataclass
class PullbackSlice:
    """v and its chart derivatives on one y0 slice; arrays are (n1, nz)."""

    y0: float
    y1: np.ndarray
    y2: np.ndarray
    v: np.ndarray
    dv0: np.ndarray
    dv1: np.ndarray
    dv2: np.ndarray
    det_jac: np.ndarray
    jac_inv_T: np.ndarray   # (n1, nz, 3, 3), inverse-transpose of D Psi

    @property
    def dz(self):
        return float(self.y2[1] - self.y2[0])


@dataclass
class SliceDiagnostics:
    y0: float
    Theta1: float
    Theta2: float
    Theta3: float
    theta1_fiber: np.ndarray
    theta2_fiber: np.ndarray
    s_star: np.ndarray = None    # filled by the decomposition stage


def pullback(field, chart, y0, y2_grid, n1=256):
    """Sample v = u o Psi and its chart derivatives on one slice.

    `field` is anything with batched evaluate/gradient (snapshot store or an
    analytic field).  Chart derivatives come from the chain rule with the
    analytic Jacobian of Psi.
    """
    y1 = np.linspace(0.0, 2 * np.pi, n1, endpoint=False)
    Y1, Y2 = np.meshgrid(y1, y2_grid, indexing="ij")
    Y0 = np.full_like(Y1, float(y0))
    pts = chart.chart_map(Y0.ravel(), Y1.ravel(), Y2.ravel(), check_aperture=False)
    jac, det = chart.chart_jacobian(Y0.ravel(), Y1.ravel(), Y2.ravel())

    t, x, y = pts[:, 0], pts[:, 1], pts[:, 2]
    v = field.evaluate(t, x, y)
    ut, ux, uy = field.gradient(t, x, y)
    du = np.stack([ut, ux, uy], axis=-1)
    # dv_i = Du . dPsi/dy_i
    dv = np.einsum("nk,nki->ni", du, jac)

    shape = Y1.shape
    return PullbackSlice(
        y0=float(y0), y1=y1, y2=np.asarray(y2_grid, dtype=float),
        v=v.reshape(shape),
        dv0=dv[:, 0].reshape(shape),
        dv1=dv[:, 1].reshape(shape),
        dv2=dv[:, 2].reshape(shape),
        det_jac=det.reshape(shape),
        jac_inv_T=np.linalg.inv(jac).transpose(0, 2, 1).reshape(*shape, 3, 3),
    )


# ---------------------------------------------------------------------------
# fiber functionals
# ---------------------------------------------------------------------------

def theta1(z, v, vz, eps):
    """Weighted fiber energy excess over the flat-kink constant.

    int_I (1+z^2) [ eps/2 vz^2 + (v^2-1)^2/(2 eps) ] dz - c0.
    """
    z = np.asarray(z, dtype=float)
    dens = (1.0 + z * z) * (0.5 * eps * vz ** 2 + (v * v - 1.0) ** 2 / (2.0 * eps))
    return simpson(dens, z[1] - z[0], axis=-1) - c0()


def theta2(z, v, weight="abs"):
    """Weighted far-field misfit of the fiber: int w(z) (v - sign z)^2 dz.

    weight="abs" is the fiber form (|z|); weight="square" (z^2) matches the
    printed slice functional Theta2.
    """
    z = np.asarray(z, dtype=float)
    w = np.abs(z) if weight == "abs" else z * z
    dens = w * (v - np.sign(z)) ** 2
    return simpson(dens, z[1] - z[0], axis=-1)


def slice_thetas(sl, eps, theta1_variant="2eps"):
    """The three slice functionals plus per-fiber theta arrays."""
    if theta1_variant not in THETA1_VARIANTS:
        raise ValueError(f"theta1_variant must be one of {THETA1_VARIANTS}")
    z = sl.y2
    dz = sl.dz
    v, v0, v1, v2 = sl.v, sl.dv0, sl.dv1, sl.dv2

    pot_scale = 2.0 * eps if theta1_variant == "2eps" else 2.0 * eps ** 2
    w1 = 1.0 + z * z
    dens1 = w1 * (0.5 * eps * v2 ** 2 + (v * v - 1.0) ** 2 / pot_scale)
    th1_rows = simpson(dens1, dz, axis=-1) - c0()
    Theta1 = periodic_trapezoid(th1_rows)

    dens2 = (z * z) * (v - np.sign(z)) ** 2
    Theta2 = periodic_trapezoid(simpson(dens2, dz, axis=-1))

    dens3 = 0.5 * eps * (v0 ** 2 + v1 ** 2) + (z * z) * (
        0.5 * eps * v2 ** 2 + (1.0 - v * v) ** 2 / (2.0 * eps))
    Theta3 = periodic_trapezoid(simpson(dens3, dz, axis=-1))

    th1_fibers = theta1(z, v, v2, eps)
    th2_fibers = theta2(z, v, weight="abs")
    return SliceDiagnostics(y0=sl.y0, Theta1=float(Theta1), Theta2=float(Theta2),
                            Theta3=float(Theta3), theta1_fiber=th1_fibers,
                            theta2_fiber=th2_fibers)


# ---------------------------------------------------------------------------
# eps-weighted norms
# ---------------------------------------------------------------------------

def h1eps_norm(w_sq_integral, dw_sq_integral, eps):
    """(eps^-1 |w|^2 + eps |Dw|^2)^(1/2) from precomputed squared integrals."""
    return float(np.sqrt(w_sq_integral / eps + eps * dw_sq_integral))


def fiber_h1eps_norm(z, w, wz, eps):
    """H^1_eps norm of a single fiber function."""
    dz = z[1] - z[0]
    return h1eps_norm(simpson(w ** 2, dz), simpson(wz ** 2, dz), eps)


def tube_quadrature_weights(sl):
    """|det DPsi| times the (y1, y2) quadrature weights for one slice."""
    wz = simpson_weights(len(sl.y2), sl.dz)
    wy1 = 2 * np.pi / len(sl.y1)
    return np.abs(sl.det_jac) * wz[None, :] * wy1


def cartesian_gradient_sq(sl, w0, w1, w2):
    """|grad_(t,x) w|^2 from chart derivatives via the inverse Jacobian.

    (w0, w1, w2) are the chart-coordinate partials of w on the slice grid;
    the Euclidean spacetime gradient is JacInvT . (w0, w1, w2).
    """
    dw = np.stack([w0, w1, w2], axis=-1)
    cart = np.einsum("...ij,...j->...i", sl.jac_inv_T, dw)
    return np.sum(cart ** 2, axis=-1)


# ---------------------------------------------------------------------------
# far field
# ---------------------------------------------------------------------------

@dataclass
class FarFieldReport:
    """Region integrals over M = (time window) minus the rho-tube."""

    inside_sq: float      # int_{M ∩ O} (u-1)^2
    outside_sq: float     # int_{M \ O} (u+1)^2
    energy: float         # int_M eps/2 |Du|^2 + (u^2-1)^2/(2 eps)
    w_sq: float           # int_M (u - U)^2      (U = +-1 there)
    dw_sq: float          # int_M |Du|^2


def farfield_masks(chart, t, axis):
    """(inside, outside) masks at time t w.r.t. the rho-tube boundary curves."""
    from .geometry import polygon_contains
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    inner = chart.slice_polygon(t, +chart.rho)
    outer = chart.slice_polygon(t, -chart.rho)
    m_in = polygon_contains(inner, X.ravel(), Y.ravel()).reshape(X.shape)
    m_out = ~polygon_contains(outer, X.ravel(), Y.ravel()).reshape(X.shape)
    return m_in, m_out


def farfield_deviation(store, chart, t_lo, t_hi, eps):
    """Accumulate the far-field deviation integrals over snapshots in window.

    Each Cartesian cell belongs to exactly one region via its center; the
    time integral is a trapezoid over the snapshot cadence.
    """
    idx = store.index_window(t_lo, t_hi)
    if len(idx) < 2:
        from .errors import InsufficientSnapshots
        raise InsufficientSnapshots("far-field window covers fewer than 2 snapshots")
    n = round(2 * store.L / store.h) + 1
    half = (n - 1) // 2
    axis = np.arange(-half, half + 1) * store.h
    cell = store.h ** 2

    tw = np.full(len(idx), store.dt)
    tw[0] *= 0.5
    tw[-1] *= 0.5

    acc = np.zeros(5)
    for k, i in enumerate(idx):
        u = store.u(i)
        m_in, m_out = farfield_masks(chart, store.ts[i], axis)
        ut, ux, uy = store.ut(i), store.ux(i), store.uy(i)
        grad_sq = ut ** 2 + ux ** 2 + uy ** 2
        far = m_in | m_out
        w = cell * tw[k]
        acc[0] += w * np.sum((u[m_in] - 1.0) ** 2)
        acc[1] += w * np.sum((u[m_out] + 1.0) ** 2)
        acc[2] += w * np.sum(0.5 * eps * grad_sq[far]
                             + (u[far] ** 2 - 1.0) ** 2 / (2.0 * eps))
        acc[3] += w * (np.sum((u[m_in] - 1.0) ** 2) + np.sum((u[m_out] + 1.0) ** 2))
        acc[4] += w * np.sum(grad_sq[far])
    return FarFieldReport(*acc)
