"""1D interface profiles: the tanh kink, its width-eps rescaling, and the
cutoff-truncated profile that is exactly +-1 outside the tube core.

The truncated profile blends the kink into sign(z) with a smooth even bump
chi: chi = 1 for |z| <= rho/3, chi = 0 for |z| >= 2*rho/3, z*chi'(z) <= 0.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class ProfileParams:
    """Interface width and tube half-width; eps << rho is assumed."""

    epsilon: float
    rho: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.epsilon > self.rho / 4:
            warnings.warn(
                f"interface width eps={self.epsilon} is not small against the tube "
                f"(rho={self.rho}); truncation artifacts may be visible",
                stacklevel=2,
            )


@dataclass(frozen=True)
class Fiber:
    """Uniform samples of one normal fiber on I = (-rho, rho).

    The grid must be symmetric about 0; when the interface width is given,
    the spacing must resolve it (dz <= eps/16).
    """

    y2: np.ndarray
    values: np.ndarray
    epsilon: float = None

    def __post_init__(self):
        y2 = np.asarray(self.y2, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if y2.shape != vals.shape:
            raise ValueError("fiber grid and values must have the same shape")
        if np.abs(y2 + y2[::-1]).max() > 1e-12:
            raise ValueError("fiber grid must be symmetric about 0")
        steps = np.diff(y2)
        if np.abs(steps - steps[0]).max() > 1e-12:
            raise ValueError("fiber grid must be uniform")
        if self.epsilon is not None and steps[0] > self.epsilon / 16 * (1 + 1e-12):
            raise ValueError(f"fiber spacing {steps[0]:.3e} too coarse for "
                             f"epsilon={self.epsilon}")
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "values", vals)

    @property
    def dz(self):
        return float(self.y2[1] - self.y2[0])


def fiber_grid(rho, epsilon, points_per_eps=16):
    """Symmetric odd-count grid on (-rho, rho) with spacing <= eps/points_per_eps."""
    dz_max = epsilon / points_per_eps
    half = int(np.ceil(rho / dz_max))
    # keep the open-interval endpoints just inside I
    dz = rho / (half + 0.5)
    return np.arange(-half, half + 1) * dz


def q(z):
    """The standing kink, tanh(z)."""
    return np.tanh(z)


def _sech2(x):
    """Overflow-safe sech^2."""
    a = np.exp(-np.abs(np.asarray(x, dtype=float)))
    return (2.0 * a / (1.0 + a * a)) ** 2


def q_prime(z):
    """d/dz tanh = sech^2; also equals 1 - q^2 (equipartition)."""
    return _sech2(z)


def q_eps(z, epsilon):
    """Width-eps kink tanh(z/eps); odd and strictly increasing."""
    return np.tanh(np.asarray(z, dtype=float) / epsilon)


def q_eps_prime(z, epsilon):
    return _sech2(np.asarray(z, dtype=float) / epsilon) / epsilon


def _bump(t):
    """exp(-1/t) for t > 0, else 0; the standard smooth step ingredient."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _smoothstep(t):
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1."""
    a = _bump(t)
    b = _bump(1.0 - np.asarray(t, dtype=float))
    return a / (a + b + (a + b == 0))


def chi(z, rho):
    """Even smooth cutoff: 1 on |z| <= rho/3, 0 on |z| >= 2*rho/3."""
    t = (2.0 * rho / 3.0 - np.abs(np.asarray(z, dtype=float))) / (rho / 3.0)
    return _smoothstep(t)


def Q_eps(z, epsilon, rho):
    """Truncated kink: q_eps blended into sign(z) outside the tube core.

    Exactly equals sign(z) for |z| >= 2*rho/3; differs from q_eps by
    O(exp(-c/eps)) in any Sobolev norm on the tube.
    """
    z = np.asarray(z, dtype=float)
    c = chi(z, rho)
    return q_eps(z, epsilon) * c + (1.0 - c) * np.sign(z)


def Q_eps_prime(z, epsilon, rho, dz=1e-7):
    """Derivative of the truncated kink (analytic kink part + cutoff terms)."""
    z = np.asarray(z, dtype=float)
    c = chi(z, rho)
    cp = (chi(z + dz, rho) - chi(z - dz, rho)) / (2 * dz)
    return q_eps_prime(z, epsilon) * c + cp * (q_eps(z, epsilon) - np.sign(z))


def translate(f, s):
    """Return the translate tau_s f: z -> f(z - s)."""

    def shifted(z, *args, **kwargs):
        return f(np.asarray(z, dtype=float) - s, *args, **kwargs)

    return shifted


def c0():
    """Total 1D interface energy of the kink; independent of eps."""
    return 4.0 / 3.0


_CONSTANT_CACHE = {}


def second_moment_constant():
    """K = int s^2 q'(s)^2 ds, by adaptive quadrature, cached.

    Sets the leading eps^2 coefficient of the weighted fiber energy excess.
    """
    if "K" not in _CONSTANT_CACHE:
        val, _ = quad(lambda s: s * s / np.cosh(s) ** 4, -40, 40,
                      epsabs=1e-13, epsrel=1e-13)
        _CONSTANT_CACHE["K"] = val
    return _CONSTANT_CACHE["K"]


def tail_moment_constant():
    """K2 = int |s| (q(s) - sign(s))^2 ds, by adaptive quadrature, cached."""
    if "K2" not in _CONSTANT_CACHE:
        val, _ = quad(lambda s: abs(s) * (np.tanh(abs(s)) - 1.0) ** 2, -40, 40,
                      epsabs=1e-14, epsrel=1e-13)
        _CONSTANT_CACHE["K2"] = val
    return _CONSTANT_CACHE["K2"]
