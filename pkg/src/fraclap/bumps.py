"""Seeded random test fields (sums of Gaussian bumps) and smooth cutoffs."""

from __future__ import annotations

import numpy as np

from .grid import Grid, GridFunction, sample


def random_bump_field(rng: np.random.Generator, grid: Grid, n_bumps=(3, 6),
                      width_range=(0.2, 0.8), margin: float = 1.0,
                      boundary_vanish: bool = False, amp_range=(-1.0, 1.0)):
    """Callable sum of Gaussian bumps with centers at least ``margin`` inside
    the box (margin shrinks automatically on small boxes); multiplied by
    x_n/(x_n + 0.1) when a vanishing boundary trace is requested."""
    dim = grid.dim
    lo = np.asarray(grid.lo)
    hi = np.asarray(grid.hi)
    ext = hi - lo
    m = min(margin, 0.35 * float(np.min(ext)))
    scale = min(1.0, float(np.min(ext)) / 4.0)
    wlo, whi = width_range[0] * scale, width_range[1] * scale
    k = int(rng.integers(n_bumps[0], n_bumps[1] + 1))
    centers = lo + m + rng.random((k, dim)) * (ext - 2 * m)
    widths = wlo + rng.random(k) * (whi - wlo)
    amps = amp_range[0] + rng.random(k) * (amp_range[1] - amp_range[0])

    def field(x):
        x = np.asarray(x, dtype=float)
        if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            pts = x[..., None]
        else:
            pts = x
        out = np.zeros(pts.shape[:-1])
        for c, wdt, a in zip(centers, widths, amps):
            r2 = np.sum((pts - c) ** 2, axis=-1)
            out = out + a * np.exp(-r2 / wdt ** 2)
        if boundary_vanish:
            xn = pts[..., dim - 1]
            out = out * xn / (xn + 0.1)
        return out

    return field


def sample_random_bumps(rng: np.random.Generator, grid: Grid, **kw) -> GridFunction:
    f = sample(random_bump_field(rng, grid, **kw), grid)
    if kw.get("boundary_vanish") and grid.halfspace:
        sl = [slice(None)] * grid.dim
        sl[grid.dim - 1] = 0
        f.values[tuple(sl)] = 0.0
    return f


class SmoothCutoff:
    """Radial C^2 cutoff: 1 on B(center, r_one), 0 outside B(center, r_zero),
    quintic smoothstep transition."""

    def __init__(self, center, r_one: float, r_zero: float):
        if not (0.0 < r_one < r_zero):
            raise ValueError("need 0 < r_one < r_zero")
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.r_one = float(r_one)
        self.r_zero = float(r_zero)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pts = x[..., None] if (x.ndim == 0 or x.shape[-1] != self.center.size) else x
        if pts.shape[-1] != self.center.size:
            pts = x[..., None]
        r = np.sqrt(np.sum((pts - self.center) ** 2, axis=-1))
        u = np.clip((r - self.r_one) / (self.r_zero - self.r_one), 0.0, 1.0)
        return 1.0 - (10.0 * u ** 3 - 15.0 * u ** 4 + 6.0 * u ** 5)


class TensorCutoff1D:
    """C^2 plateau cutoff on an interval: 1 on [a1, b1], 0 outside [a0, b0]."""

    def __init__(self, a0, a1, b1, b0):
        if not (a0 < a1 < b1 < b0):
            raise ValueError("need a0 < a1 < b1 < b0")
        self.a0, self.a1, self.b1, self.b0 = map(float, (a0, a1, b1, b0))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        up = np.clip((x - self.a0) / (self.a1 - self.a0), 0.0, 1.0)
        dn = np.clip((self.b0 - x) / (self.b0 - self.b1), 0.0, 1.0)
        st = lambda u: 10.0 * u ** 3 - 15.0 * u ** 4 + 6.0 * u ** 5
        return st(up) * st(dn)
