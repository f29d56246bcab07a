"""Discrete Hardy-Littlewood and sharp maximal functions, censored versions,
reflection domination, and Fefferman-Stein ratios.

Averages are volume averages over the grid cells meeting B(x, r) (intersected
with the upper half-space when censored), with exact intersection lengths in
1D and midpoint sub-sampling of boundary cells in 2D.  The sub-sample set is
mirror-symmetric, which makes the reflection set inclusions exact at the
discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .grid import Grid, GridError, GridFunction, even_reflect, lp_norm

_SUBSAMPLE = 32


def dyadic_radii(grid: Grid) -> tuple[float, ...]:
    """Dyadic radius set {h, 2h, 4h, ...} up to the box diameter."""
    h = grid.spacing
    diam = float(np.sqrt(sum((hi - lo) ** 2 for lo, hi in zip(grid.lo, grid.hi))))
    radii = []
    r = h
    while r <= diam:
        radii.append(r)
        r *= 2.0
    return tuple(radii)


@lru_cache(maxsize=128)
def _ball_pattern(r_over_h: float, dim: int) -> np.ndarray:
    """Cell-intersection volumes vol(cell_o cap B(0, r)) on the unit lattice.

    Index o + (k+1) per axis, o the cell base offset relative to the center.
    """
    r = float(r_over_h)
    k = int(np.ceil(r)) + 1
    if dim == 1:
        lo = np.arange(-k, k) * 1.0
        return np.clip(np.minimum(lo + 1.0, r) - np.maximum(lo, -r), 0.0, None)
    o = np.arange(-k, k) * 1.0
    X0, Y0 = np.meshgrid(o, o, indexing="ij")
    # min/max corner distances
    cx = np.stack([X0, X0 + 1.0])
    cy = np.stack([Y0, Y0 + 1.0])
    dmax = np.zeros_like(X0)
    for a in range(2):
        for b in range(2):
            dmax = np.maximum(dmax, np.hypot(cx[a], cy[b]))
    nx = np.minimum(np.abs(X0), np.abs(X0 + 1.0))
    nx[(X0 < 0) & (X0 + 1.0 > 0)] = 0.0
    ny = np.minimum(np.abs(Y0), np.abs(Y0 + 1.0))
    ny[(Y0 < 0) & (Y0 + 1.0 > 0)] = 0.0
    dmin = np.hypot(nx, ny)
    vol = np.zeros_like(X0)
    vol[dmax <= r] = 1.0
    part = (dmax > r) & (dmin < r)
    if np.any(part):
        ss = (np.arange(_SUBSAMPLE) + 0.5) / _SUBSAMPLE
        px, py = np.meshgrid(ss, ss, indexing="ij")
        pxf = px.ravel()[None, :]
        pyf = py.ravel()[None, :]
        xs = X0[part][:, None] + pxf
        ys = Y0[part][:, None] + pyf
        vol[part] = np.mean(xs * xs + ys * ys <= r * r, axis=1)
    return vol


def _cell_abs_means(f: GridFunction) -> np.ndarray:
    v = np.abs(f.values)
    return _corner_mean(v, f.grid.dim)


def _cell_means(f: GridFunction) -> np.ndarray:
    return _corner_mean(f.values, f.grid.dim)


def _corner_mean(v: np.ndarray, dim: int) -> np.ndarray:
    if dim == 1:
        return 0.5 * (v[:-1] + v[1:])
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


@dataclass
class MaximalField:
    grid: Grid
    values: np.ndarray
    radii: tuple
    censored: bool
    sharp: bool

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.grid, self.values)


def _censor_mask(grid: Grid, censored: bool) -> np.ndarray:
    mask = np.ones(grid.cells, dtype=bool)
    if censored and not grid.halfspace:
        centers = grid.cell_centers()
        mask &= centers[..., grid.dim - 1] > 0.0
    return mask


def _pattern_conv(cellfield: np.ndarray, pattern: np.ndarray, dim: int) -> np.ndarray:
    """num[node] = sum_o pattern[o] cellfield[node + o]; nodes = cells + 1."""
    rev = pattern[tuple(slice(None, None, -1) for _ in range(dim))]
    full = fftconvolve(cellfield, rev, mode="full")
    k1 = pattern.shape[0] // 2  # = k+1
    sl = tuple(slice(k1 - 1, k1 + cellfield.shape[a]) for a in range(dim))
    return full[sl]


def maximal(f: GridFunction, censored: bool = True, radii=None) -> MaximalField:
    """Hardy-Littlewood maximal field: volume averages of |f| over grid cells
    meeting B(node, r), maximized over the radius set."""
    grid = f.grid
    if radii is None:
        radii = dyadic_radii(grid)
    radii = tuple(float(r) for r in radii)
    if not radii:
        raise GridError("empty radius set")
    h = grid.spacing
    m = _cell_abs_means(f) * _censor_mask(grid, censored)
    ones = np.ones(grid.cells) * _censor_mask(grid, censored)
    best = np.full(grid.node_shape, -np.inf)
    for r in radii:
        pat = _ball_pattern(round(r / h, 12), grid.dim) * h ** grid.dim
        num = _pattern_conv(m, pat, grid.dim)
        den = _pattern_conv(ones, pat, grid.dim)
        avg = num / np.maximum(den, 1e-300)
        best = np.maximum(best, avg)
    return MaximalField(grid=grid, values=best, radii=radii, censored=censored, sharp=False)


def sharp_maximal(f: GridFunction, censored: bool = True, radii=None,
                  node_chunk: int = 512) -> MaximalField:
    """Sharp maximal field: double volume averages of |f(y) - f(z)| over the
    (censored) ball, cell means paired with intersection weights."""
    grid = f.grid
    dim = grid.dim
    if radii is None:
        radii = dyadic_radii(grid)
    radii = tuple(float(r) for r in radii)
    if not radii:
        raise GridError("empty radius set")
    h = grid.spacing
    cmask = _censor_mask(grid, censored)
    mu = _cell_means(f)
    order = np.argsort(mu.ravel(), kind="stable")
    mu_sorted = mu.ravel()[order]
    cells_multi = np.unravel_index(order, grid.cells)
    keep = cmask.ravel()[order]
    mu_sorted = mu_sorted[keep]
    cells_sorted = tuple(c[keep] for c in cells_multi)
    ncells = mu_sorted.size
    nodes_multi = np.unravel_index(np.arange(grid.n_nodes), grid.node_shape)
    best = np.full(grid.n_nodes, -np.inf)
    for r in radii:
        pat = _ball_pattern(round(r / h, 12), dim) * h ** dim
        k1 = pat.shape[0] // 2
        patp = np.pad(pat, 1)
        for i0 in range(0, grid.n_nodes, node_chunk):
            i1 = min(grid.n_nodes, i0 + node_chunk)
            if dim == 1:
                off = cells_sorted[0][None, :] - nodes_multi[0][i0:i1][:, None] + k1 + 1
                off = np.clip(off, 0, patp.shape[0] - 1)
                W = patp[off]
            else:
                offx = cells_sorted[0][None, :] - nodes_multi[0][i0:i1][:, None] + k1 + 1
                offy = cells_sorted[1][None, :] - nodes_multi[1][i0:i1][:, None] + k1 + 1
                offx = np.clip(offx, 0, patp.shape[0] - 1)
                offy = np.clip(offy, 0, patp.shape[1] - 1)
                W = patp[offx, offy]
            CW = np.cumsum(W, axis=1)
            CS = np.cumsum(W * mu_sorted[None, :], axis=1)
            tot_w = CW[:, -1]
            # sum_{i<j} w_i w_j (mu_j - mu_i) = sum_j w_j (mu_j CW_{j-1} - CS_{j-1})
            CWm = np.concatenate([np.zeros((CW.shape[0], 1)), CW[:, :-1]], axis=1)
            CSm = np.concatenate([np.zeros((CS.shape[0], 1)), CS[:, :-1]], axis=1)
            num = 2.0 * np.sum(W * (mu_sorted[None, :] * CWm - CSm), axis=1)
            avg = num / np.maximum(tot_w, 1e-300) ** 2
            best[i0:i1] = np.maximum(best[i0:i1], avg)
    return MaximalField(grid=grid, values=best.reshape(grid.node_shape),
                        radii=radii, censored=censored, sharp=True)


def reflection_domination(f: GridFunction, radii=None) -> dict:
    """Factor-4 domination of the even reflection: max over nodes of
    M# f~ / M#_+ f (at x or its mirror), both sides on the shared radius set."""
    grid = f.grid
    if not grid.halfspace:
        raise GridError("reflection domination requires a half-space grid")
    if radii is None:
        radii = dyadic_radii(grid)
    ft = even_reflect(f)
    full = sharp_maximal(ft, censored=False, radii=radii)
    half = sharp_maximal(f, censored=True, radii=radii)
    ax = grid.dim - 1
    n = grid.cells[ax]
    vals_full = full.values
    vals_half = half.values
    # upper block of the reflected grid corresponds to the half grid
    upper = np.take(vals_full, np.arange(n, 2 * n + 1), axis=ax)
    lower = np.take(vals_full, np.arange(n, -1, -1), axis=ax)
    ratios = []
    for top, bottom in ((upper, vals_half), (lower, vals_half)):
        mask = (np.abs(top) > 1e-14) | (np.abs(bottom) > 1e-14)
        with np.errstate(divide="ignore", invalid="ignore"):
            rat = np.where(mask, top / np.maximum(bottom, 1e-300), np.nan)
        ratios.append(rat)
    allr = np.concatenate([r[np.isfinite(r)].ravel() for r in ratios])
    return {
        "max_ratio_upper": float(np.nanmax(ratios[0])) if np.isfinite(ratios[0]).any() else 0.0,
        "max_ratio_lower": float(np.nanmax(ratios[1])) if np.isfinite(ratios[1]).any() else 0.0,
        "max_ratio": float(allr.max()) if allr.size else 0.0,
        "n_compared": int(allr.size),
    }


def fefferman_stein_ratio(f: GridFunction, p: float, censored: bool = True,
                          radii=None) -> float:
    """|| f ||_p / || M#_+ f ||_p over the grid."""
    if not (1.0 < p < np.inf):
        raise GridError(f"p must lie in (1, inf), got {p}")
    if float(np.max(np.abs(f.values))) == 0.0:
        raise GridError("f must not vanish identically")
    sharp = sharp_maximal(f, censored=censored, radii=radii)
    return lp_norm(f, p) / lp_norm(sharp.as_grid_function(), p)
