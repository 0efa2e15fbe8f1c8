"""Snapshot persistence and spacetime interpolation of solver output.

Snapshots are written by the solver as .npy arrays with JSON sidecars at a
uniform time cadence.  The store serves batched point evaluation of u and Du
anywhere between snapshots: cubic B-spline interpolation in space (spline
coefficients cached per level), the unique 4-point cubic in time, and
4th-order centered differences for the gradient fields.
"""

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InsufficientSnapshots, OutOfBox
from .numerics import diff4


class SnapshotStore:
    """Time-ordered snapshot collection with lazy, cached interpolation."""

    def __init__(self, ts, loaders, h, L, epsilon, cache_size=48):
        order = np.argsort(ts)
        self.ts = np.asarray(ts, dtype=float)[order]
        self._loaders = [loaders[i] for i in order]
        if len(self.ts) >= 2:
            dts = np.diff(self.ts)
            if dts.max() - dts.min() > 1e-9 * max(1.0, abs(self.ts).max()):
                raise InsufficientSnapshots("snapshot cadence is not uniform")
            self.dt = float(dts.mean())
        else:
            self.dt = 0.0
        self.h = float(h)
        self.L = float(L)
        self.epsilon = float(epsilon)
        self._cache = OrderedDict()
        self._cache_size = cache_size

    # -- construction --------------------------------------------------------

    @classmethod
    def from_directory(cls, directory, cache_size=48):
        directory = Path(directory)
        metas = sorted(directory.glob("snap_*.json"))
        if not metas:
            raise InsufficientSnapshots(f"no snapshots found in {directory}")
        ts, loaders = [], []
        h = L = epsilon = None
        for mpath in metas:
            with open(mpath) as fh:
                meta = json.load(fh)
            ts.append(meta["t"])
            h, L, epsilon = meta["h"], meta["L"], meta["epsilon"]
            npy = mpath.with_suffix(".npy")
            loaders.append(lambda p=npy: np.load(p, mmap_mode="r"))
        return cls(ts, loaders, h, L, epsilon, cache_size=cache_size)

    @classmethod
    def from_arrays(cls, ts, arrays, h, L, epsilon, cache_size=48):
        loaders = [lambda a=a: a for a in arrays]
        return cls(ts, loaders, h, L, epsilon, cache_size=cache_size)

    # -- level-wise fields -----------------------------------------------------

    def __len__(self):
        return len(self.ts)

    def _get(self, key, build):
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        val = build()
        self._cache[key] = val
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return val

    def u(self, i):
        return self._get(("u", i), lambda: np.asarray(self._loaders[i](), dtype=float))

    def ux(self, i):
        return self._get(("ux", i), lambda: diff4(self.u(i), self.h, axis=0))

    def uy(self, i):
        return self._get(("uy", i), lambda: diff4(self.u(i), self.h, axis=1))

    def ut(self, i):
        def build():
            n = len(self.ts)
            if n < 5:
                raise InsufficientSnapshots("time derivative needs >= 5 snapshots")
            j = min(max(i, 2), n - 3)
            stack = np.stack([self.u(j - 2), self.u(j - 1), self.u(j),
                              self.u(j + 1), self.u(j + 2)])
            # evaluate the 5-point 4th-order derivative at offset (i - j)
            offs = i - j
            c = _fd5_first_derivative_weights(offs) / self.dt
            return np.tensordot(c, stack, axes=(0, 0))
        return self._get(("ut", i), build)

    def _coeff(self, i, field):
        def build():
            arr = {"u": self.u, "ux": self.ux, "uy": self.uy, "ut": self.ut}[field](i)
            return ndimage.spline_filter(arr, order=3, mode="mirror")
        return self._get(("c" + field, i), build)

    # -- point evaluation --------------------------------------------------------

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.ts) < 4:
            raise InsufficientSnapshots("cubic time interpolation needs >= 4 snapshots")
        s = (t - self.ts[0]) / self.dt
        j = np.floor(s).astype(int)
        j = np.clip(j, 1, len(self.ts) - 3)
        frac = s - j
        if np.any(frac < -1e-6) or np.any(frac > 1.0 + 1e-6):
            raise InsufficientSnapshots(
                f"requested times [{t.min():.4f}, {t.max():.4f}] not bracketed by "
                f"snapshots [{self.ts[0]:.4f}, {self.ts[-1]:.4f}] with cubic margin"
            )
        return j, frac

    def _grid_coords(self, x, y):
        gx = (np.asarray(x, dtype=float) + self.L) / self.h
        gy = (np.asarray(y, dtype=float) + self.L) / self.h
        n = round(2 * self.L / self.h) + 1
        if np.any(gx < 0) or np.any(gx > n - 1) or np.any(gy < 0) or np.any(gy > n - 1):
            raise OutOfBox("pullback point outside the solver box")
        return gx, gy

    def _interp_fields(self, t, x, y, fields):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        j, frac = self._locate(t)
        gx, gy = self._grid_coords(x, y)
        out = {f: np.empty_like(t) for f in fields}
        for jv in np.unique(j):
            sel = j == jv
            w = _cubic_lagrange_weights(frac[sel])        # (4, m)
            coords = np.stack([gx[sel], gy[sel]])
            for f in fields:
                acc = np.zeros(sel.sum())
                for li, lev in enumerate(range(jv - 1, jv + 3)):
                    vals = ndimage.map_coordinates(self._coeff(lev, f), coords,
                                                   order=3, prefilter=False,
                                                   mode="mirror")
                    acc += w[li] * vals
                out[f][sel] = acc
        return out

    def evaluate(self, t, x, y):
        """Interpolated u at spacetime points (batched)."""
        return self._interp_fields(t, x, y, ("u",))["u"]

    def gradient(self, t, x, y):
        """Interpolated (du/dt, du/dx, du/dy) at spacetime points."""
        got = self._interp_fields(t, x, y, ("ut", "ux", "uy"))
        return got["ut"], got["ux"], got["uy"]

    def index_window(self, t_lo, t_hi):
        """Snapshot indices with t in [t_lo, t_hi]."""
        return np.flatnonzero((self.ts >= t_lo - 1e-12) & (self.ts <= t_hi + 1e-12))


def _cubic_lagrange_weights(frac):
    """Weights of the cubic through nodes {-1, 0, 1, 2} evaluated at frac."""
    f = np.asarray(frac, dtype=float)
    wm1 = -f * (f - 1) * (f - 2) / 6.0
    w0 = (f + 1) * (f - 1) * (f - 2) / 2.0
    w1 = -(f + 1) * f * (f - 2) / 2.0
    w2 = (f + 1) * f * (f - 1) / 6.0
    return np.stack([wm1, w0, w1, w2])


def _fd5_first_derivative_weights(offset):
    """First-derivative weights on 5 uniform nodes, evaluated at node `offset`.

    offset counts from the center node; 0 gives the classic centered stencil
    (1, -8, 0, 8, -1)/12.
    """
    nodes = np.arange(-2.0, 3.0)
    x = float(offset)
    w = np.zeros(5)
    for i in range(5):
        others = np.delete(nodes, i)
        denom = np.prod(nodes[i] - others)
        total = 0.0
        for k in range(4):
            rest = np.delete(others, k)
            total += np.prod(x - rest)
        w[i] = total / denom
    return w


class AnalyticField:
    """Closed-form field with the same batch interface as SnapshotStore."""

    def __init__(self, value_fn, gradient_fn=None):
        self._value = value_fn
        self._gradient = gradient_fn

    def evaluate(self, t, x, y):
        return np.asarray(self._value(np.asarray(t, dtype=float),
                                      np.asarray(x, dtype=float),
                                      np.asarray(y, dtype=float)))

    def gradient(self, t, x, y):
        if self._gradient is None:
            raise NotImplementedError("no gradient closure provided")
        return self._gradient(np.asarray(t, dtype=float),
                              np.asarray(x, dtype=float),
                              np.asarray(y, dtype=float))
