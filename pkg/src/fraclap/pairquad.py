"""Singular pair quadrature for translation-invariant kernels |x-y|^(-e)
against piecewise-multilinear data on uniform grids.

Every cell-pair double integral is reduced by the substitution z = y - x to

    I = Integral over z of |z|^(-e) * H(z) dz,
    H(z) = Integral over {x in K0, x+z in Kd} of (local polynomial data) dx.

For touching / identical cell pairs the z-domain contains the kernel
singularity; there H vanishes to a known order m at z = 0 and the z-integral
is taken in polar form: angular sectors split at the breakpoint-grid corner
directions, radial pieces split at breakpoint-line crossings, a Gauss-Jacobi
rule with weight r^(dim-1-e+m) on the piece touching r = 0 and Gauss-Legendre
elsewhere.  Radial integrands are piecewise polynomial, so the rules are
essentially exact; the only approximation is the angular Gauss rule on an
analytic integrand.

Disjoint pairs use plain tensor Gauss in (x, y).
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np

from .quadrature import gauss01, gauss_jacobi01

_NEAR_THETA = 16       # angular Gauss nodes per sector
_NEAR_RAD_GJ = 10      # Gauss-Jacobi nodes on the piece touching the origin
_NEAR_RAD_GL = 12      # Gauss-Legendre nodes per radial piece
_ANGLE_TOL = 1e-12


# ---------------------------------------------------------------------------
# near-field node generation


def _radial_pieces(cosw, sinw, rect, lines_x, lines_y):
    """Sorted radii in (0, R] where the ray crosses breakpoint lines or exits."""
    R = np.inf
    for c, lo, hi in ((cosw, rect[0][0], rect[0][1]), (sinw, rect[1][0], rect[1][1])):
        if c > _ANGLE_TOL:
            R = min(R, hi / c)
        elif c < -_ANGLE_TOL:
            R = min(R, lo / c)
        else:
            if lo > _ANGLE_TOL or hi < -_ANGLE_TOL:
                return None
    if not np.isfinite(R) or R <= _ANGLE_TOL:
        return None
    crossings = [R]
    for c, lines in ((cosw, lines_x), (sinw, lines_y)):
        if abs(c) > _ANGLE_TOL:
            for v in lines:
                r = v / c
                if _ANGLE_TOL < r < R * (1 - 1e-13):
                    crossings.append(r)
    return np.array(sorted(set(np.round(crossings, 15))))


@lru_cache(maxsize=512)
def near_offset_nodes(d: tuple, h: float, dim: int, e: float, m: int):
    """Quadrature nodes (pts, w) with Integral |z|^(-e) H(z) dz = sum w * H(pts)
    over the z-rectangle of cell offset d (near offsets only).

    H must vanish to order m at z = 0 along every ray.
    """
    beta = dim - 1.0 - e + m
    if beta <= -1.0:
        raise ValueError(f"kernel too singular for vanishing order {m}: beta={beta}")
    if dim == 1:
        (d0,) = d
        z_lo, z_hi = (d0 - 1) * h, (d0 + 1) * h
        points = sorted({z_lo, d0 * h, z_hi, 0.0})
        pts_list, w_list = [], []
        for a, b in zip(points[:-1], points[1:]):
            if b <= z_lo - 1e-15 or a >= z_hi + 1e-15 or b - a < 1e-15:
                continue
            if abs(a) < 1e-15 or abs(b) < 1e-15:
                # piece touching the origin: Gauss-Jacobi with weight r^beta
                r1 = max(abs(a), abs(b))
                sgn = 1.0 if abs(a) < 1e-15 else -1.0
                x, w = gauss_jacobi01(_NEAR_RAD_GJ, beta)
                r = r1 * x
                pts_list.append(sgn * r)
                w_list.append(w * r1 ** (beta + 1.0) * r ** (-float(m)))
            else:
                x, w = gauss01(_NEAR_RAD_GL)
                r = a + (b - a) * x
                pts_list.append(r)
                w_list.append(w * (b - a) * np.abs(r) ** (-e))
        pts = np.concatenate(pts_list)[:, None]
        wts = np.concatenate(w_list)
        return pts, wts

    # dim == 2
    rect = (((d[0] - 1) * h, (d[0] + 1) * h), ((d[1] - 1) * h, (d[1] + 1) * h))
    lines_x = [v * h for v in (d[0] - 1, d[0], d[0] + 1) if abs(v) > 0]
    lines_y = [v * h for v in (d[1] - 1, d[1], d[1] + 1) if abs(v) > 0]
    corners_x = [(d[0] - 1) * h, d[0] * h, (d[0] + 1) * h]
    corners_y = [(d[1] - 1) * h, d[1] * h, (d[1] + 1) * h]
    angles = set()
    for cx, cy in product(corners_x, corners_y):
        if abs(cx) > _ANGLE_TOL or abs(cy) > _ANGLE_TOL:
            angles.add(np.arctan2(cy, cx))
    ang = np.array(sorted(angles))
    # dedupe nearly-equal angles, close the circle
    keep = np.concatenate([[True], np.diff(ang) > 1e-10])
    ang = ang[keep]
    sectors = list(zip(ang, np.roll(ang, -1)))
    sectors[-1] = (ang[-1], ang[0] + 2 * np.pi)

    xg, wg = gauss01(_NEAR_THETA)
    pts_list, w_list = [], []
    for t0, t1 in sectors:
        if t1 - t0 < 1e-12:
            continue
        tm = 0.5 * (t0 + t1)
        if _radial_pieces(np.cos(tm), np.sin(tm), rect, lines_x, lines_y) is None:
            continue
        thetas = t0 + (t1 - t0) * xg
        wth = wg * (t1 - t0)
        for th, wt in zip(thetas, wth):
            cw, sw = np.cos(th), np.sin(th)
            pieces = _radial_pieces(cw, sw, rect, lines_x, lines_y)
            if pieces is None:
                continue
            prev = 0.0
            for k, rk in enumerate(pieces):
                if k == 0:
                    x, w = gauss_jacobi01(_NEAR_RAD_GJ, beta)
                    r = rk * x
                    wr = w * rk ** (beta + 1.0) * r ** (-float(m))
                else:
                    a, b = prev, rk
                    # split long pieces: fractional kernel power resolved by GL
                    nsplit = 1 if b / a < 3.0 else 2
                    bounds = np.geomspace(a, b, nsplit + 1)
                    rs, ws = [], []
                    for aa, bb in zip(bounds[:-1], bounds[1:]):
                        x, w = gauss01(_NEAR_RAD_GL)
                        rr = aa + (bb - aa) * x
                        rs.append(rr)
                        ws.append(w * (bb - aa) * rr ** (dim - 1.0 - e))
                    r = np.concatenate(rs)
                    wr = np.concatenate(ws)
                pts_list.append(np.stack([r * cw, r * sw], axis=-1))
                w_list.append(wr * wt)
                prev = rk
    pts = np.concatenate(pts_list, axis=0)
    wts = np.concatenate(w_list)
    return pts, wts


def near_offsets(dim: int):
    return [d for d in product(*([(-1, 0, 1)] * dim))]


# ---------------------------------------------------------------------------
# exact evaluation of the overlap integrals of basis products


def _shape_vals(kind: int, x: np.ndarray, h: float) -> np.ndarray:
    """Multilinear shape on the reference cell [0, h]: kind 0 falls, kind 1 rises."""
    t = x / h
    return 1.0 - t if kind == 0 else t


def basis_pair_profile(d: tuple, h: float, z: np.ndarray, pairs_A, pairs_B):
    """G_AB(z) for the bilinear form integrand, vectorized.

    G_AB(z) = Int over {x in K0, x+z in Kd} of
              (phi_A(x) - phi_A(x+z)) (phi_B(x) - phi_B(x+z)) dx,
    with phi_N the global hat at node offset N (per-axis offsets in Z).
    Returns an array (len(z), len(pairs_A)).
    """
    dim = len(d)
    z = np.atleast_2d(z)
    P = z.shape[0]
    xg, wg = gauss01(2)

    # per axis: overlap limits and the four factor matrices over the per-axis
    # offset alphabet
    axis_F = []
    alphabets = []
    for k in range(dim):
        zk = z[:, k]
        lo = np.maximum(0.0, d[k] * h - zk)
        hi = np.minimum(h, (d[k] + 1) * h - zk)
        length = np.maximum(hi - lo, 0.0)
        nodes = lo[:, None] + length[:, None] * xg[None, :]          # (P, 2)
        wts = length[:, None] * wg[None, :]
        alpha = sorted({0, 1, d[k], d[k] + 1})
        alphabets.append(alpha)
        nA = len(alpha)
        # u-shapes: hat at offset a restricted to K0 as function of x
        U = np.zeros((nA, P, 2))
        V = np.zeros((nA, P, 2))
        for ia, a in enumerate(alpha):
            if a in (0, 1):
                U[ia] = _shape_vals(a, nodes, h)
            b = a - d[k]
            if b in (0, 1):
                V[ia] = _shape_vals(b, nodes + zk[:, None] - d[k] * h, h)
        # factor matrices F[t][ia, ib, P] = Int shape_t1(ia) shape_t2(ib)
        Fuu = np.einsum("apg,bpg,pg->abp", U, U, wts)
        Fuv = np.einsum("apg,bpg,pg->abp", U, V, wts)
        Fvu = np.einsum("apg,bpg,pg->abp", V, U, wts)
        Fvv = np.einsum("apg,bpg,pg->abp", V, V, wts)
        axis_F.append((Fuu, Fuv, Fvu, Fvv))

    nP = len(pairs_A)
    iA = np.zeros((dim, nP), dtype=int)
    iB = np.zeros((dim, nP), dtype=int)
    for k in range(dim):
        amap = {a: i for i, a in enumerate(alphabets[k])}
        iA[k] = [amap[a[k]] for a in pairs_A]
        iB[k] = [amap[b[k]] for b in pairs_B]

    out = np.zeros((P, nP))
    for tsign, t in ((1.0, 0), (-1.0, 1), (-1.0, 2), (1.0, 3)):
        term = np.ones((P, nP))
        for k in range(dim):
            F = axis_F[k][t]
            term = term * F[iA[k], iB[k], :].T
        out += tsign * term
    return out


# ---------------------------------------------------------------------------
# interaction tables for the nodal basis


class FormTables:
    """Per-offset pair integrals of the form integrand for kernel |x-y|^(-e).

    near[d]: (node_offsets S_d, T) with T[a, b] the combined pair integral
             for ordered cell pair (i, i+d), a, b indexing S_d
    P, Q:    far-offset cross and same-side tables, shape offsets x 2^dim x 2^dim,
             zeroed on near offsets
    """

    def __init__(self, cells: tuple, h: float, e: float, dim: int):
        self.cells = tuple(cells)
        self.h = float(h)
        self.e = float(e)
        self.dim = dim
        self._build_near()
        self._build_far()

    # -- near ---------------------------------------------------------------

    def _build_near(self):
        dim, h, e = self.dim, self.h, self.e
        self.near = {}
        for d in near_offsets(dim):
            S = sorted(set(product(*[(0, 1)] * dim))
                       | {tuple(d[k] + c[k] for k in range(dim))
                          for c in product(*[(0, 1)] * dim)})
            pairs = [(a, b) for a in S for b in S]
            pts, w = near_offset_nodes(d, h, dim, e, 2)
            G = basis_pair_profile(d, h, pts, [p[0] for p in pairs], [p[1] for p in pairs])
            vals = w @ G
            T = vals.reshape(len(S), len(S))
            T = 0.5 * (T + T.T)
            self.near[d] = (S, T)

    # -- far ----------------------------------------------------------------

    def _far_offset_grid(self):
        ranges = [np.arange(-(c - 1), c) for c in self.cells]
        return ranges

    def _build_far(self):
        dim, h, e = self.dim, self.h, self.e
        corners = list(product(*[(0, 1)] * dim))
        nc = len(corners)
        ranges = self._far_offset_grid()
        shape = tuple(len(r) for r in ranges)
        self.offset_ranges = ranges
        self.P = np.zeros(shape + (nc, nc))
        self.Q = np.zeros(shape + (nc, nc))

        # offsets as flat list with near mask
        mesh = np.meshgrid(*ranges, indexing="ij")
        D = np.stack([m.ravel() for m in mesh], axis=-1)           # (ND, dim)
        nearmask = np.all(np.abs(D) <= 1, axis=1)

        def fill(sel, q):
            if not np.any(sel):
                return
            Dse = D[sel]
            xg, wg = gauss01(q)
            # tensor nodes per cell, basis values at them
            grids = np.meshgrid(*([xg] * dim), indexing="ij")
            XN = np.stack([g.ravel() for g in grids], axis=-1) * h   # (G, dim)
            WN = np.ones(XN.shape[0])
            for k in range(dim):
                WN = WN * np.meshgrid(*([wg] * dim), indexing="ij")[k].ravel() * h
            B = np.ones((nc, XN.shape[0]))
            for ic, c in enumerate(corners):
                for k in range(dim):
                    t = XN[:, k] / h
                    B[ic] *= t if c[k] == 1 else (1.0 - t)
            # pair nodes: x in K0 at XN, y in Kd at d*h + XN'
            diff = XN[None, :, :] - XN[:, None, :]                  # (G, G, dim) y-x
            # weights for P: B_alpha(x) B_beta(y); for Q: B_alpha(x) B_beta(x)
            Wp = np.einsum("g,h,ag,bh->ghab", WN, WN, B, B).reshape(-1, nc * nc)
            Wq = np.einsum("g,h,ag,bg->ghab", WN, WN, B, B).reshape(-1, nc * nc)
            chunk = max(1, min(len(Dse), int(3.2e7 // diff[..., 0].size)))
            Pp = np.empty((len(Dse), nc * nc))
            Qq = np.empty((len(Dse), nc * nc))
            dflat = diff.reshape(-1, dim)
            for i0 in range(0, len(Dse), chunk):
                dd = Dse[i0:i0 + chunk]
                zz = dd[:, None, :] * h + dflat[None, :, :]
                r2 = np.einsum("ijk,ijk->ij", zz, zz)
                K = r2 ** (-e / 2.0)
                Pp[i0:i0 + chunk] = K @ Wp
                Qq[i0:i0 + chunk] = K @ Wq
            idx = tuple((Dse[:, k] + self.cells[k] - 1) for k in range(dim))
            self.P[idx] = Pp.reshape(-1, nc, nc)
            self.Q[idx] = Qq.reshape(-1, nc, nc)

        dist = np.max(np.abs(D), axis=1)
        fill(~nearmask & (dist <= 6), 6)
        fill(~nearmask & (dist > 6), 4)
        # symmetrize: P(-d)[b,a] = P(d)[a,b] exactly; Q is symmetric per offset
        sl = tuple(slice(None, None, -1) for _ in range(dim))
        self.P = 0.5 * (self.P + np.transpose(self.P[sl], tuple(range(dim)) + (dim + 1, dim)))

    @property
    def corner_offsets(self):
        return list(product(*[(0, 1)] * self.dim))
