"""Exact cross-correlations of multilinear grid functions and the kernel
functionals built from them.

For nodal (multilinear) f, g the correlation S(z) = Int f(x) g(x+z) dx is
exactly a lattice sum of cubic B-splines:

    S(z) = sum_e CC[e] * prod_i h * M4((z_i - e_i h)/h),
    CC[e] = sum_a f[a] g[a+e],

so quadratic functionals like the full-space Gagliardo form reduce to a
single z-integral of |z|^(-e) against a piecewise-polynomial profile.
"""

from __future__ import annotations

from itertools import product

import numpy as np
from scipy.signal import fftconvolve

from .grid import GridFunction
from .kernels import box_complement_mass
from .pairquad import near_offset_nodes
from .quadrature import gauss01


def bspline_m4(t: np.ndarray) -> np.ndarray:
    """Centered cubic cardinal B-spline (support [-2, 2], unit integral)."""
    a = np.abs(t)
    out = np.zeros_like(a)
    inner = a <= 1.0
    out[inner] = 2.0 / 3.0 - a[inner] ** 2 + 0.5 * a[inner] ** 3
    mid = (a > 1.0) & (a < 2.0)
    out[mid] = ((2.0 - a[mid]) ** 3) / 6.0
    return out


def lattice_correlation(f_vals: np.ndarray, g_vals: np.ndarray) -> np.ndarray:
    """CC[e] = sum_a f[a] g[a+e] over all offsets, shape 2*shape-1."""
    rev = f_vals[tuple(slice(None, None, -1) for _ in range(f_vals.ndim))]
    return fftconvolve(g_vals, rev, mode="full")


class CorrelationKit:
    """z-quadrature scaffolding for Int |z|^(-e) H(z) dz with H built from
    correlations of nodal functions on a fixed grid.

    Precomputes the z nodes (polar near rule around 0, per-lattice-cell Gauss
    elsewhere), the B-spline gather stencils at +z and -z, and the analytic
    tail mass beyond the covered z-box.
    """

    def __init__(self, node_shape: tuple, h: float, e: float, m: int = 2,
                 q_near: int = 6, q_far: int = 4):
        self.dim = len(node_shape)
        self.h = float(h)
        self.e = float(e)
        self.node_shape = tuple(node_shape)
        dim, h_ = self.dim, self.h

        pts_near, w_near = near_offset_nodes((0,) * dim, h_, dim, e, m)

        half = [n + 1 for n in node_shape]  # cells k in [-half, half)
        cell_ranges = [np.arange(-hf, hf) for hf in half]
        mesh = np.meshgrid(*cell_ranges, indexing="ij")
        K = np.stack([mm.ravel() for mm in mesh], axis=-1)
        far = np.max(np.abs(K + 0.5), axis=1) > 1.0  # exclude the near rect [-h,h]^n
        K = K[far]
        dist = np.max(np.abs(K + 0.5), axis=1)

        pts_list = [pts_near]
        w_list = [w_near]
        for q, sel in ((q_near + 2, dist <= 3.5), (q_far, dist > 3.5)):
            Ks = K[sel]
            if len(Ks) == 0:
                continue
            xg, wg = gauss01(q)
            grids = np.meshgrid(*([xg] * dim), indexing="ij")
            XN = np.stack([g.ravel() for g in grids], axis=-1)
            WN = np.ones(XN.shape[0])
            for k in range(dim):
                WN = WN * np.meshgrid(*([wg] * dim), indexing="ij")[k].ravel()
            z = (Ks[:, None, :] + XN[None, :, :]) * h_
            z = z.reshape(-1, dim)
            r2 = np.einsum("ij,ij->i", z, z)
            w = (np.tile(WN, len(Ks)) * h_ ** dim) * r2 ** (-self.e / 2.0)
            pts_list.append(z)
            w_list.append(w)
        self.pts = np.concatenate(pts_list, axis=0)
        self.w = np.concatenate(w_list)

        # gather stencils for S(+z) and S(-z)
        self._stencil_plus = self._build_stencil(self.pts)
        self._stencil_minus = self._build_stencil(-self.pts)

        L = [hf * h_ for hf in half]
        self.tail_mass = float(box_complement_mass(
            self.e, np.zeros(dim), [-l for l in L], L, dim, halfspace=False)[0])

    def _build_stencil(self, pts: np.ndarray):
        """Indices into the (padded) CC table and B-spline weights, per point."""
        dim, h = self.dim, self.h
        t = pts / h
        base = np.floor(t).astype(int)
        offs = np.arange(-1, 3)
        idx_axes = []
        wgt_axes = []
        for k in range(dim):
            ek = base[:, k][:, None] + offs[None, :]            # (P, 4)
            wk = bspline_m4(t[:, k][:, None] - ek)
            # CC index: e ranges over [-(n-1), n-1] -> index e + n - 1; pad by 2
            nk = self.node_shape[k]
            ik = np.clip(ek + nk - 1 + 2, 0, 2 * nk + 2)
            valid = np.abs(ek) <= nk - 1
            wk = np.where(valid, wk, 0.0)
            idx_axes.append(ik)
            wgt_axes.append(wk)
        if dim == 1:
            flat_idx = idx_axes[0]
            wgt = wgt_axes[0]
        else:
            n2 = 2 * self.node_shape[1] + 3
            flat_idx = (idx_axes[0][:, :, None] * n2 + idx_axes[1][:, None, :]).reshape(len(pts), 16)
            wgt = (wgt_axes[0][:, :, None] * wgt_axes[1][:, None, :]).reshape(len(pts), 16)
        return flat_idx, wgt * self.h ** dim

    def correlation_table(self, f: GridFunction, g: GridFunction) -> np.ndarray:
        """Padded CC table used by the stencils."""
        cc = lattice_correlation(f.values, g.values)
        return np.pad(cc, 2)

    def s_values(self, cc_padded: np.ndarray, minus: bool = False) -> np.ndarray:
        idx, wgt = self._stencil_minus if minus else self._stencil_plus
        flat = cc_padded.ravel()
        return np.einsum("pk,pk->p", flat[idx], wgt)

    def fullspace_form(self, f: GridFunction, g: GridFunction | None = None) -> float:
        """Int Int over R^n x R^n of (f(x)-f(y))(g(x)-g(y)) |x-y|^(-e) dx dy
        for the zero-extended interpolants."""
        g = f if g is None else g
        cc = self.correlation_table(f, g)
        s0 = _dot_integral(f, g)
        Hp = self.s_values(cc)
        Hm = self.s_values(cc, minus=True)
        H = 2.0 * s0 - Hp - Hm
        return float(self.w @ H + 2.0 * s0 * self.tail_mass)


def _dot_integral(f: GridFunction, g: GridFunction) -> float:
    from .grid import inner_product
    return inner_product(f, g)
