"""Shared quadrature and finite-difference helpers.

Everything here operates on uniform grids and is deterministic: fixed-order
numpy reductions only.
"""

import numpy as np


def simpson_weights(n, dz):
    """Composite Simpson weights for n samples (n odd) with spacing dz."""
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Simpson rule needs an odd number of samples >= 3, got {n}")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (dz / 3.0)


def simpson(values, dz, axis=-1):
    """Composite Simpson integral along `axis` (odd sample count)."""
    values = np.asarray(values)
    w = simpson_weights(values.shape[axis], dz)
    shape = [1] * values.ndim
    shape[axis] = len(w)
    return np.sum(values * w.reshape(shape), axis=axis)


def periodic_trapezoid(values, period=2.0 * np.pi, axis=-1):
    """Trapezoid rule for samples of a periodic function on [0, period).

    The sample grid must be uniform without the duplicated endpoint; for
    smooth periodic integrands this is spectrally accurate.
    """
    values = np.asarray(values)
    n = values.shape[axis]
    return np.sum(values, axis=axis) * (period / n)


def diff4(values, dz, axis=-1):
    """4th-order centered first derivative on a uniform grid.

    Interior points use the 5-point stencil; the two cells at each end fall
    back to one-sided 4th-order stencils so the output has the input shape.
    """
    values = np.asarray(values, dtype=float)
    v = np.moveaxis(values, axis, 0)
    n = v.shape[0]
    if n < 5:
        raise ValueError("diff4 needs at least 5 samples")
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * dz)
    # one-sided 4th order (coefficients from Taylor tables)
    c0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * dz)
    c1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12 * dz)
    out[0] = np.tensordot(c0, v[:5], axes=(0, 0))
    out[1] = np.tensordot(c1, v[:5], axes=(0, 0))
    out[-1] = -np.tensordot(c0, v[-5:][::-1], axes=(0, 0))
    out[-2] = -np.tensordot(c1, v[-5:][::-1], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def diff2_periodic(values, dz, axis=-1):
    """2nd-order centered first derivative with periodic wraparound."""
    values = np.asarray(values, dtype=float)
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2 * dz)


def cumulative_integral4(values, dz):
    """Cumulative integral from index 0, 4th-order accurate, along axis 0.

    Each cell [z_i, z_{i+1}] is integrated with the cubic through the four
    surrounding samples; end cells use the one-sided cubic.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n < 4:
        raise ValueError("cumulative_integral4 needs at least 4 samples")
    seg = np.empty_like(v)
    # central interval of a 4-point cubic: weights (-1, 13, 13, -1)/24
    seg[1:-2] = (dz / 24.0) * (-v[:-3] + 13 * v[1:-2] + 13 * v[2:-1] - v[3:])
    # first/last interval: cubic through the nearest four samples
    seg[0] = (dz / 24.0) * (9 * v[0] + 19 * v[1] - 5 * v[2] + v[3])
    seg[-2] = (dz / 24.0) * (v[-4] - 5 * v[-3] + 19 * v[-2] + 9 * v[-1])
    out = np.zeros_like(v)
    np.cumsum(seg[:-1], axis=0, out=out[1:])
    return out


def golden_section(f, a, b, tol):
    """Golden-section minimization of a unimodal scalar function on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def solve3x3_batch(mats, rhs):
    """Solve a batch of 3x3 linear systems; thin wrapper kept for intent."""
    return np.linalg.solve(mats, rhs[..., None])[..., 0]
