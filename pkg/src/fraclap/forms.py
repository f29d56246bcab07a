"""Regional Dirichlet forms, their Galerkin matrices, and fractional
Gagliardo seminorms (isotropic, tangential, normal) on grid functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.signal import fftconvolve

from .correlate import CorrelationKit, _dot_integral
from .grid import (Grid, GridError, GridFunction, resolve_region,
                   weighted_power_integral)
from .kernels import (ParameterError, box_complement_mass,
                      halfspace_column_constant, tail_weight)
from .pairquad import FormTables, near_offset_nodes, near_offsets
from .quadrature import gauss01

_tables_cache: dict = {}
_corr_cache: dict = {}

_PAIR_LIMIT = 40_000_000


def form_tables(grid: Grid, e: float) -> FormTables:
    key = (grid.cells, round(grid.spacing, 14), round(e, 12))
    if key not in _tables_cache:
        if len(_tables_cache) > 12:
            _tables_cache.clear()
        _tables_cache[key] = FormTables(grid.cells, grid.spacing, e, grid.dim)
    return _tables_cache[key]


def correlation_kit(grid: Grid, e: float, m: int = 2) -> CorrelationKit:
    key = (grid.node_shape, round(grid.spacing, 14), round(e, 12), m)
    if key not in _corr_cache:
        if len(_corr_cache) > 8:
            _corr_cache.clear()
        _corr_cache[key] = CorrelationKit(grid.node_shape, grid.spacing, e, m)
    return _corr_cache[key]


@dataclass
class SymmetricForm:
    """Dense symmetric Galerkin matrix of the regional form on the nodal basis."""

    grid: Grid
    matrix: np.ndarray
    cell_mask: np.ndarray
    order: float
    tail_corrected: bool

    def energy(self, f: GridFunction, g: GridFunction | None = None) -> float:
        x = f.values.ravel()
        y = x if g is None else g.values.ravel()
        return float(x @ (self.matrix @ y))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _node_index(grid: Grid, cells_idx, corner) -> np.ndarray:
    if grid.dim == 1:
        return cells_idx[0] + corner[0]
    return (cells_idx[0] + corner[0]) * grid.node_shape[1] + (cells_idx[1] + corner[1])


def _shift_mask(mask: np.ndarray, d) -> np.ndarray:
    out = np.zeros_like(mask)
    src, dst = [], []
    for k, s in enumerate(d):
        n = mask.shape[k]
        if abs(s) >= n:
            return out
        if s >= 0:
            dst.append(slice(0, n - s)); src.append(slice(s, n))
        else:
            dst.append(slice(-s, n)); src.append(slice(0, n + s))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def _masked_offset_sums(mask: np.ndarray, table: np.ndarray, dim: int) -> np.ndarray:
    """OS[i] = sum_d table[d] mask[i+d], offsets indexed d + (cells-1)."""
    rev = table[tuple(slice(None, None, -1) for _ in range(dim))]
    full = fftconvolve(mask.astype(float), rev, mode="full")
    sl = tuple(slice((table.shape[k] - 1) // 2, (table.shape[k] - 1) // 2 + mask.shape[k])
               for k in range(dim))
    return full[sl]


def assemble_regional_form(grid: Grid, s: float, region=None, tail: bool = False) -> SymmetricForm:
    """Galerkin matrix of the regional Dirichlet form of order s over a
    cell-aligned region; optional half-space truncation tail correction.

    A[a,b] = Int_O Int_O (phi_a(x)-phi_a(y))(phi_b(x)-phi_b(y)) |x-y|^(-n-2s);
    with ``tail``, adds the diagonal correction 2 Int phi_a phi_b rho with
    rho the kernel mass of R^n_+ minus the box (half-space grids only).
    """
    if not (0.5 < s < 1.0):
        raise ParameterError(f"s must lie in (1/2, 1), got {s}")
    mask = resolve_region(grid, region)
    if not mask.any():
        raise GridError("empty region")
    dim = grid.dim
    e = dim + 2.0 * s
    tb = form_tables(grid, e)
    N = grid.n_nodes
    A = np.zeros((N, N))
    cells_idx = np.nonzero(mask)

    for d in near_offsets(dim):
        S, T = tb.near[d]
        sel = mask & _shift_mask(mask, d)
        idx = np.nonzero(sel)
        if idx[0].size == 0:
            continue
        for ia, a_off in enumerate(S):
            rows = _node_index(grid, idx, a_off)
            for ib, b_off in enumerate(S):
                cols = _node_index(grid, idx, b_off)
                np.add.at(A.ravel(), rows * N + cols, T[ia, ib])

    corners = tb.corner_offsets
    for ia, ca in enumerate(corners):
        rows = _node_index(grid, cells_idx, ca)
        for ib, cb in enumerate(corners):
            qs = _masked_offset_sums(mask, tb.Q[..., ia, ib], dim)
            cols = _node_index(grid, cells_idx, cb)
            np.add.at(A.ravel(), rows * N + cols, 2.0 * qs[cells_idx])

    if dim == 1:
        ci = cells_idx[0]
        M = grid.cells[0]
        off = ci[None, :] - ci[:, None] + (M - 1)
        for ia, ca in enumerate(corners):
            rows = ci + ca[0]
            for ib, cb in enumerate(corners):
                cols = ci + cb[0]
                A[np.ix_(rows, cols)] -= 2.0 * tb.P[off, ia, ib]
    else:
        ci = np.stack(cells_idx, axis=-1)
        Mx, My = grid.cells
        chunk = max(1, int(2.5e6 // max(1, ci.shape[0])))
        for ia, ca in enumerate(corners):
            rows_all = _node_index(grid, cells_idx, ca)
            for ib, cb in enumerate(corners):
                cols_all = _node_index(grid, cells_idx, cb)
                Pt = tb.P[..., ia, ib]
                for i0 in range(0, ci.shape[0], chunk):
                    blk = ci[i0:i0 + chunk]
                    offx = ci[:, 0][None, :] - blk[:, 0][:, None] + (Mx - 1)
                    offy = ci[:, 1][None, :] - blk[:, 1][:, None] + (My - 1)
                    A[np.ix_(rows_all[i0:i0 + chunk], cols_all)] -= 2.0 * Pt[offx, offy]

    if tail:
        _add_tail_matrix(A, grid, s, mask)

    _symmetrize(A)
    return SymmetricForm(grid=grid, matrix=A, cell_mask=mask, order=s, tail_corrected=tail)


def _symmetrize(A: np.ndarray, block: int = 2048):
    n = A.shape[0]
    for i0 in range(0, n, block):
        i1 = min(n, i0 + block)
        blk = A[i0:i1, i0:i1]
        A[i0:i1, i0:i1] = 0.5 * (blk + blk.T)
        for j0 in range(i1, n, block):
            j1 = min(n, j0 + block)
            m = 0.5 * (A[i0:i1, j0:j1] + A[j0:j1, i0:i1].T)
            A[i0:i1, j0:j1] = m
            A[j0:j1, i0:i1] = m.T


# ---------------------------------------------------------------------------
# graded cell quadrature against singular face weights


def graded_cell_quadrature(grid: Grid, singular_lo, singular_hi, depth: int = 12,
                           q: int = 4):
    """Yield (cell_flat_index, pts, W) batches for cell quadrature with
    geometric grading toward the listed singular faces.

    singular_lo/hi: booleans per axis marking which box faces carry a
    singular weight.  Interior cells come in one vectorized batch.
    """
    h = grid.spacing
    dim = grid.dim
    xg, wg = gauss01(q)
    graded_cells = []
    plain = np.ones(grid.cells, dtype=bool)
    for k in range(dim):
        if singular_lo[k]:
            sl = [slice(None)] * dim
            sl[k] = 0
            plain[tuple(sl)] = False
        if singular_hi[k]:
            sl = [slice(None)] * dim
            sl[k] = grid.cells[k] - 1
            plain[tuple(sl)] = False
    idx = np.nonzero(plain)
    if idx[0].size:
        # one batch: tensor Gauss on every plain cell
        base = np.stack([grid.lo[k] + idx[k] * h for k in range(dim)], axis=-1)
        grids = np.meshgrid(*([xg] * dim), indexing="ij")
        XN = np.stack([g.ravel() for g in grids], axis=-1) * h
        WN = np.ones(XN.shape[0])
        for k in range(dim):
            WN = WN * np.meshgrid(*([wg] * dim), indexing="ij")[k].ravel() * h
        pts = base[:, None, :] + XN[None, :, :]
        flat = np.ravel_multi_index(idx, grid.cells)
        yield flat, pts.reshape(-1, dim), np.tile(WN, idx[0].size), XN
    # graded cells one by one
    for ci in zip(*np.nonzero(~plain)):
        axes_iv = []
        for k in range(dim):
            lo = grid.lo[k] + ci[k] * h
            hi = lo + h
            iv = [(lo, hi)]
            if singular_lo[k] and ci[k] == 0:
                iv = _graded_intervals(lo, hi, True, depth)
            if singular_hi[k] and ci[k] == grid.cells[k] - 1:
                iv = [p for seg in iv for p in
                      (_graded_intervals(seg[0], seg[1], False, depth)
                       if seg[1] >= hi - 1e-15 else [seg])]
            axes_iv.append(iv)
        pts_list, w_list, loc_list = [], [], []
        for box in product(*axes_iv):
            ax_pts = [box[k][0] + (box[k][1] - box[k][0]) * xg for k in range(dim)]
            ax_wts = [(box[k][1] - box[k][0]) * wg for k in range(dim)]
            mesh = np.meshgrid(*ax_pts, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=-1)
            W = np.ones(pts.shape[0])
            for k in range(dim):
                W = W * np.meshgrid(*ax_wts, indexing="ij")[k].ravel()
            pts_list.append(pts)
            w_list.append(W)
        pts = np.concatenate(pts_list, axis=0)
        W = np.concatenate(w_list)
        base = np.array([grid.lo[k] + ci[k] * h for k in range(dim)])
        flat = np.array([np.ravel_multi_index(ci, grid.cells)])
        yield flat, pts, W, pts - base[None, :]


def _graded_intervals(lo: float, hi: float, toward_lo: bool, depth: int):
    w = hi - lo
    out = []
    prev = hi if toward_lo else lo
    for k in range(1, depth + 1):
        cur = (lo + w * 2.0 ** (-k)) if toward_lo else (hi - w * 2.0 ** (-k))
        out.append((cur, prev) if toward_lo else (prev, cur))
        prev = cur
    out.append((lo, prev) if toward_lo else (prev, hi))
    return out


def _truncation_faces(grid: Grid, halfspace_region: bool):
    """Faces where the complement-kernel weight is singular."""
    dim = grid.dim
    lo = [True] * dim
    hi = [True] * dim
    if halfspace_region and grid.halfspace:
        lo[dim - 1] = False  # physical boundary, no complement below
    return lo, hi


def weighted_mass_bilinear(grid: Grid, weight_fn, mask: np.ndarray, depth: int = 12,
                           singular=None):
    """Per-cell corner-pair matrices M[cell][a,b] = Int_cell phi_a phi_b w dx."""
    dim = grid.dim
    h = grid.spacing
    corners = list(product(*[(0, 1)] * dim))
    out = {}
    slo, shi = singular if singular is not None else ([True] * dim, [True] * dim)
    for flat, pts, W, loc in graded_cell_quadrature(grid, slo, shi, depth):
        w = weight_fn(pts)
        if len(flat) > 1:
            G = loc.shape[0]
            B = np.ones((len(corners), G))
            for ic, c in enumerate(corners):
                for k in range(dim):
                    t = loc[:, k] / h
                    B[ic] *= t if c[k] == 1 else 1.0 - t
            Wm = (W * w).reshape(len(flat), G)
            M = np.einsum("ng,ag,bg->nab", Wm, B, B)
            for i, fl in enumerate(flat):
                out[int(fl)] = M[i]
        else:
            B = np.ones((len(corners), pts.shape[0]))
            for ic, c in enumerate(corners):
                for k in range(dim):
                    t = loc[:, k] / h
                    B[ic] *= t if c[k] == 1 else 1.0 - t
            out[int(flat[0])] = np.einsum("g,ag,bg->ab", W * w, B, B)
    return out, corners


def _add_tail_matrix(A: np.ndarray, grid: Grid, s: float, mask: np.ndarray):
    if not grid.halfspace:
        raise ParameterError("tail correction requires a half-space grid")
    N = grid.n_nodes
    faces = _truncation_faces(grid, halfspace_region=True)
    masses, corners = weighted_mass_bilinear(
        grid, lambda p: tail_weight(p, s, grid), mask, singular=faces)
    maskflat = mask.ravel()
    for flat, M in masses.items():
        if not maskflat[flat]:
            continue
        ci = np.unravel_index(flat, grid.cells)
        ci = tuple(np.array([c]) for c in ci)
        for ia, ca in enumerate(corners):
            ra = _node_index(grid, ci, ca)[0]
            for ib, cb in enumerate(corners):
                rb = _node_index(grid, ci, cb)[0]
                A[ra, rb] += 2.0 * M[ia, ib]


def exterior_power_term(f: GridFunction, e: float, p: float, halfspace_region: bool,
                        depth: int = 12) -> float:
    """2 Int |f(x)|^p rho(x) dx, rho the complement mass of the region."""
    grid = f.grid
    faces = _truncation_faces(grid, halfspace_region)
    total = 0.0
    for flat, pts, W, _ in graded_cell_quadrature(grid, faces[0], faces[1], depth):
        rho = box_complement_mass(e, pts, grid.lo, grid.hi, grid.dim,
                                  halfspace=halfspace_region)
        total += 2.0 * float(np.sum(W * rho * np.abs(f(pts)) ** p))
    return total


def tail_bilinear(f: GridFunction, g: GridFunction, s: float) -> float:
    """2 Int f g rho over the box (half-space complement weight)."""
    grid = f.grid
    e = grid.dim + 2.0 * s
    faces = _truncation_faces(grid, halfspace_region=True)
    total = 0.0
    for flat, pts, W, _ in graded_cell_quadrature(grid, faces[0], faces[1], 12):
        rho = tail_weight(pts, s, grid)
        total += 2.0 * float(np.sum(W * rho * f(pts) * g(pts)))
    return total


# ---------------------------------------------------------------------------
# bilinear form energies without the dense matrix


def form_energy(f: GridFunction, g: GridFunction | None, s: float, region=None,
                tail: bool = False) -> float:
    """f^T A g of the regional form via offset tables and FFT correlations."""
    grid = f.grid
    g = f if g is None else g
    mask = resolve_region(grid, region)
    dim = grid.dim
    e = dim + 2.0 * s
    tb = form_tables(grid, e)
    total = 0.0
    for d in near_offsets(dim):
        S, T = tb.near[d]
        sel = mask & _shift_mask(mask, d)
        idx = np.nonzero(sel)
        if idx[0].size == 0:
            continue
        FA = np.stack([f.values[tuple(idx[k] + a[k] for k in range(dim))] for a in S])
        GA = np.stack([g.values[tuple(idx[k] + a[k] for k in range(dim))] for a in S])
        total += np.einsum("ab,ai,bi->", T, FA, GA)
    corners = tb.corner_offsets
    maskf = mask.astype(float)
    csl = lambda c: tuple(slice(c[k], c[k] + mask.shape[k]) for k in range(dim))
    for ia, ca in enumerate(corners):
        Fa = f.values[csl(ca)] * maskf
        for ib, cb in enumerate(corners):
            Gb = g.values[csl(cb)] * maskf
            qs = _masked_offset_sums(mask, tb.Q[..., ia, ib], dim)
            total += 2.0 * np.sum(qs * f.values[csl(ca)] * g.values[csl(cb)] * maskf)
            rev = Fa[tuple(slice(None, None, -1) for _ in range(dim))]
            cc = fftconvolve(Gb, rev, mode="full")
            total -= 2.0 * np.sum(tb.P[..., ia, ib] * cc)
    if tail:
        total += tail_bilinear(f, g, s)
    return float(total)


# ---------------------------------------------------------------------------
# seminorms


def seminorm(f: GridFunction, sigma: float, p: float, region="halfspace") -> float:
    """Gagliardo seminorm [f]_{W^{sigma,p}} over a region.

    region: "halfspace" (R^n_+ with zero extension), "fullspace" (R^n),
    or a cell-aligned region (mask, ball spec, None for the bare box form).
    """
    if not (0.0 < sigma < 1.0):
        raise ParameterError(f"sigma must lie in (0,1), got {sigma}")
    if not (1.0 <= p < np.inf):
        raise ParameterError(f"p must lie in [1, inf), got {p}")
    grid = f.grid
    e = grid.dim + sigma * p
    extended = isinstance(region, str) and region in ("halfspace", "fullspace")
    if extended and region == "halfspace" and not grid.halfspace:
        raise GridError("halfspace seminorm requires a half-space grid")
    if extended:
        _check_extension_traces(f, sigma, p, bottom=(region == "fullspace"))
    if p == 2.0 and extended:
        return float(np.sqrt(max(_extended_form_p2(f, sigma, region), 0.0)))
    if p == 2.0:
        # share the assembly quadrature so the matrix cross-check is exact
        val = form_energy(f, None, sigma, region=region)
        return float(np.sqrt(max(val, 0.0)))
    mask = resolve_region(grid, None if extended else region)
    val = pair_power_functional(f, sigma, p, mask)
    if extended:
        val += exterior_power_term(f, e, p, halfspace_region=(region == "halfspace"))
        if region == "fullspace" and grid.halfspace:
            kappa = halfspace_column_constant(grid.dim, e)
            val += 2.0 * kappa * weighted_power_integral(f, p, sigma * p)
    return float(val ** (1.0 / p))


def _extended_form_p2(f: GridFunction, sigma: float, region: str) -> float:
    grid = f.grid
    e = grid.dim + 2.0 * sigma
    kit = correlation_kit(grid, e)
    full = kit.fullspace_form(f)
    if region == "fullspace":
        return full
    kappa = halfspace_column_constant(grid.dim, e)
    return full - 2.0 * kappa * weighted_power_integral(f, 2.0, 2.0 * sigma)


def _check_extension_traces(f: GridFunction, sigma: float, p: float, bottom: bool):
    """The zero extension only lies in W^{sigma,p} when box traces vanish
    (sigma >= 1/p is the divergence threshold of the complement weight)."""
    if sigma * p < 1.0 - 1e-12:
        return
    g = f.grid
    scale = max(1.0, float(np.max(np.abs(f.values))))
    for k in range(g.dim):
        for side in (0, -1):
            if k == g.dim - 1 and g.halfspace and side == 0 and not bottom:
                continue
            tr = np.take(f.values, side, axis=k)
            if np.max(np.abs(tr)) > 1e-10 * scale:
                raise GridError("zero extension not in W^{sigma,p}: nonzero box trace "
                                f"on axis {k} side {side}")


# -- general-p pair quadrature ------------------------------------------------


def pair_power_functional(f: GridFunction, sigma: float, p: float,
                          mask: np.ndarray | None = None,
                          tangential_only: bool = False) -> float:
    """Sum over region cell pairs of Int Int |D f|^p |x-y|^(-n-sigma p) with
    D f the full difference, or the tangential-only difference in 2D."""
    grid = f.grid
    dim = grid.dim
    if tangential_only and dim != 2:
        raise GridError("tangential pair functional requires n = 2")
    e = dim + sigma * p
    h = grid.spacing
    if mask is None:
        mask = np.ones(grid.cells, dtype=bool)
    ncl = int(mask.sum())
    if ncl * ncl > _PAIR_LIMIT:
        raise GridError("grid too large for general-p pair quadrature")
    m = min(int(np.floor(p)), int(np.floor(e - dim + 1.0 - 1e-9)))
    m = max(m, 1)
    total = 0.0
    for d in near_offsets(dim):
        sel = mask & _shift_mask(mask, d)
        idx = np.nonzero(sel)
        if idx[0].size == 0:
            continue
        pts, w = near_offset_nodes(tuple(d), h, dim, e, m)
        H = _overlap_power_profile(f, idx, d, pts, p, tangential_only)
        total += float(w @ H)
    total += _far_power_sum(f, mask, sigma, p, tangential_only)
    return total


def _overlap_power_profile(f: GridFunction, idx, d, z: np.ndarray, p: float,
                           tangential_only: bool) -> np.ndarray:
    grid = f.grid
    dim = grid.dim
    h = grid.spacing
    qx = max(3, int(np.ceil((p + 2) / 2)) + 1)
    xg, wg = gauss01(qx)
    P = z.shape[0]
    npairs = idx[0].size
    corners = list(product(*[(0, 1)] * dim))
    nc = len(corners)
    Vx = np.stack([f.values[tuple(idx[k] + c[k] for k in range(dim))] for c in corners])
    if tangential_only:
        Vy = np.stack([f.values[tuple(idx[k] + (d[0] if k == 0 else 0) + c[k]
                                      for k in range(dim))] for c in corners])
    else:
        Vy = np.stack([f.values[tuple(idx[k] + d[k] + c[k] for k in range(dim))]
                       for c in corners])
    out = np.empty(P)
    chunk = max(1, int(2.0e6 // max(1, npairs * qx ** dim)))
    for z0 in range(0, P, chunk):
        zz = z[z0:z0 + chunk]
        Pz = zz.shape[0]
        nodes, lens = [], []
        for k in range(dim):
            lo = np.maximum(0.0, d[k] * h - zz[:, k])
            hi = np.minimum(h, (d[k] + 1) * h - zz[:, k])
            ln = np.maximum(hi - lo, 0.0)
            lens.append(ln)
            nodes.append(lo[:, None] + ln[:, None] * xg[None, :])

        def tensor_shapes(coords):
            B = np.empty((Pz,) + (qx,) * dim + (nc,))
            for ic, c in enumerate(corners):
                val = np.ones((Pz,) + (qx,) * dim)
                for k in range(dim):
                    t = coords[k] / h
                    tt = t if c[k] == 1 else 1.0 - t
                    sh = [Pz] + [1] * dim
                    sh[1 + k] = qx
                    val = val * tt.reshape(sh)
                B[..., ic] = val
            return B.reshape(Pz, -1, nc)

        Bx = tensor_shapes(nodes)
        fx = Bx @ Vx
        if tangential_only:
            coords_y = [nodes[0] + zz[:, 0][:, None] - d[0] * h, nodes[1]]
        else:
            coords_y = [nodes[k] + zz[:, k][:, None] - d[k] * h for k in range(dim)]
        By = tensor_shapes(coords_y)
        fy = By @ Vy
        dp = np.abs(fx - fy) ** p
        Wq = np.ones((Pz,) + (qx,) * dim)
        for k in range(dim):
            sh = [Pz] + [1] * dim
            sh[1 + k] = qx
            Wq = Wq * (lens[k][:, None] * wg[None, :]).reshape(sh)
        out[z0:z0 + chunk] = np.einsum("pg,pgn->p", Wq.reshape(Pz, -1), dp)
    return out


def _far_power_sum(f: GridFunction, mask: np.ndarray, sigma: float, p: float,
                   tangential_only: bool) -> float:
    grid = f.grid
    dim = grid.dim
    h = grid.spacing
    e = dim + sigma * p
    q = 4
    xg, wg = gauss01(q)
    b1 = np.stack([1.0 - xg, xg])            # (2, q) per-axis shapes
    corners = list(product(*[(0, 1)] * dim))
    total = 0.0
    ranges = [range(-(c - 1), c) for c in grid.cells]
    for d in product(*ranges):
        if all(abs(dk) <= 1 for dk in d):
            continue
        sel = mask & _shift_mask(mask, d)
        idx = np.nonzero(sel)
        npairs = idx[0].size
        if npairs == 0:
            continue
        Vx = np.stack([f.values[tuple(idx[k] + c[k] for k in range(dim))] for c in corners])
        if tangential_only:
            Vy = np.stack([f.values[tuple(idx[k] + (d[0] if k == 0 else 0) + c[k]
                                          for k in range(dim))] for c in corners])
        else:
            Vy = np.stack([f.values[tuple(idx[k] + d[k] + c[k] for k in range(dim))]
                           for c in corners])
        z = np.asarray(d, dtype=float) * h
        if dim == 1:
            fx = np.einsum("cn,ci->in", Vx.reshape(2, npairs), b1)
            fy = np.einsum("cn,cj->jn", Vy.reshape(2, npairs), b1)
            zz = z[0] + (xg[None, :] - xg[:, None]) * h
            K = np.abs(zz) ** (-e) * np.outer(wg, wg) * h * h
            dp = np.abs(fx[:, None, :] - fy[None, :, :]) ** p
            total += float(np.einsum("ij,ijn->", K, dp))
        else:
            # fx[n, i1, i2], fy[n, j1, j2] (tangential: fy indexed [n, j1, i2])
            Vx4 = Vx.reshape(2, 2, npairs)
            Vy4 = Vy.reshape(2, 2, npairs)
            fx = np.einsum("abn,ai,bj->nij", Vx4, b1, b1)
            fy = np.einsum("abn,ai,bj->nij", Vy4, b1, b1)
            dz0 = z[0] + (xg[None, :] - xg[:, None]) * h   # [i1, j1]
            dz1 = z[1] + (xg[None, :] - xg[:, None]) * h   # [i2, j2]
            K = (dz0[:, None, :, None] ** 2 + dz1[None, :, None, :] ** 2) ** (-e / 2.0)
            W4 = np.einsum("i,j,k,l->ijkl", wg, wg, wg, wg) * h ** 4 * K
            if tangential_only:
                K3 = W4.sum(axis=3)                         # contract over j2
                # dpT[n, i1, i2, j1]: fx[n,i1,i2] - fy[n, j1, i2]
                dpT = np.abs(fx[:, :, :, None] - np.transpose(fy, (0, 2, 1))[:, None, :, :]) ** p
                total += float(np.einsum("ikj,nikj->", K3, dpT))
            else:
                dp = np.abs(fx[:, :, :, None, None] - fy[:, None, None, :, :]) ** p
                total += float(np.einsum("ikjl,nikjl->", W4, dp))
    return total


# ---------------------------------------------------------------------------
# tangential and normal seminorms (n = 2)


def _rows_power_1d(rows: np.ndarray, h: float, lo: float, sigma: float, p: float,
                   extend_lo: bool = True, extend_hi: bool = True) -> np.ndarray:
    """Full-line W^{sigma,p} seminorm^p of a batch of 1D nodal functions.

    rows: (R, nodes); returns (R,).  Zero extension outside [lo, hi]; the
    ``extend_*`` flags control whether the exterior interaction terms on each
    side are included (both off gives the bare interval form).
    """
    R, nn = rows.shape
    nc = nn - 1
    e = 1.0 + sigma * p
    m = max(1, min(int(np.floor(p)), int(np.floor(e - 1.0 + 1.0 - 1e-9))))
    out = np.zeros(R)
    qx = max(3, int(np.ceil((p + 2) / 2)) + 1)
    xg, wg = gauss01(qx)
    # near offsets via the 1D polar nodes
    for d in (-1, 0, 1):
        i0 = max(0, -d)
        i1 = min(nc, nc - d)
        if i1 <= i0:
            continue
        idx = np.arange(i0, i1)
        pts, w = near_offset_nodes((d,), h, 1, e, m)
        zz = pts[:, 0]
        lo_ov = np.maximum(0.0, d * h - zz)
        hi_ov = np.minimum(h, (d + 1) * h - zz)
        ln = np.maximum(hi_ov - lo_ov, 0.0)
        nodes_x = lo_ov[:, None] + ln[:, None] * xg[None, :]          # (P, qx)
        tx = nodes_x / h
        ty = (nodes_x + zz[:, None] - d * h) / h
        a_x = rows[:, idx]; b_x = rows[:, idx + 1]
        a_y = rows[:, idx + d]; b_y = rows[:, idx + d + 1]
        fx = (a_x[:, :, None, None] * (1 - tx)[None, None] + b_x[:, :, None, None] * tx[None, None])
        fy = (a_y[:, :, None, None] * (1 - ty)[None, None] + b_y[:, :, None, None] * ty[None, None])
        dp = np.abs(fx - fy) ** p                                     # (R, n_i, P, qx)
        H = np.einsum("ripg,pg->rp", dp, ln[:, None] * wg[None, :])
        out += H @ w
    # far offsets, vectorized per class
    b1 = np.stack([1.0 - xg, xg])
    zz_rel = (xg[None, :] - xg[:, None]) * h
    for d in range(2, nc):
        for sgn in (1, -1):
            dd = sgn * d
            i0 = max(0, -dd)
            i1 = min(nc, nc - dd)
            if i1 <= i0:
                continue
            idx = np.arange(i0, i1)
            fx = np.einsum("cg,rcn->rgn", b1, np.stack([rows[:, idx], rows[:, idx + 1]], axis=1))
            fy = np.einsum("cg,rcn->rgn", b1, np.stack([rows[:, idx + dd], rows[:, idx + dd + 1]], axis=1))
            K = np.abs(dd * h + zz_rel) ** (-e) * np.outer(wg, wg) * h * h
            dp = np.abs(fx[:, :, None, :] - fy[:, None, :, :]) ** p
            out += np.einsum("gh,rghn->r", K, dp)
    # exterior terms: 2 Int |f|^p * complement ray mass
    if extend_lo or extend_hi:
        hi = lo + nc * h
        xs_list, ws_list = [], []
        for c in range(nc):
            a = lo + c * h
            graded = (c == 0 and extend_lo) or (c == nc - 1 and extend_hi)
            if graded:
                ivs = [(a, a + h)]
                if c == 0 and extend_lo:
                    ivs = _graded_intervals(a, a + h, True, 12)
                if c == nc - 1 and extend_hi:
                    ivs = [s for piece in ivs
                           for s in (_graded_intervals(piece[0], piece[1], False, 12)
                                     if piece[1] >= a + h - 1e-15 else [piece])]
                for (aa, bb) in ivs:
                    xs_list.append(aa + (bb - aa) * xg)
                    ws_list.append((bb - aa) * wg)
            else:
                xs_list.append(a + h * xg)
                ws_list.append(h * wg)
        xs = np.concatenate(xs_list)
        ws = np.concatenate(ws_list)
        from .kernels import ray_mass_1d
        rho = np.zeros_like(xs)
        if extend_lo:
            rho = rho + ray_mass_1d(e, xs - lo)
        if extend_hi:
            rho = rho + ray_mass_1d(e, hi - xs)
        cell_of = np.clip(((xs - lo) / h).astype(int), 0, nc - 1)
        tloc = (xs - lo) / h - cell_of
        vals = rows[:, cell_of] * (1 - tloc)[None, :] + rows[:, cell_of + 1] * tloc[None, :]
        out += 2.0 * (np.abs(vals) ** p) @ (ws * rho)
    return out


def _layer_rows(f: GridFunction, axis: int, q: int = 4):
    """Row functions at per-cell Gauss stations along ``axis``: returns
    (rows, weights, h_row, lo_row) with rows (R, nodes_perp)."""
    g = f.grid
    h = g.spacing
    xg, wg = gauss01(q)
    v = f.values if axis == 1 else f.values.T
    # v indexed (perp_nodes, axis_nodes); rows blend adjacent axis layers
    ncells_ax = v.shape[1] - 1
    t = xg
    rows = []
    wts = []
    for c in range(ncells_ax):
        blend = v[:, c][None, :, None] * 0  # placeholder replaced below
    left = v[:, :-1]                       # (perp, ncells_ax)
    right = v[:, 1:]
    rows = (left[None, :, :] * (1 - t)[:, None, None]
            + right[None, :, :] * t[:, None, None])   # (q, perp, ncells_ax)
    rows = np.moveaxis(rows, 1, 2).reshape(q * ncells_ax, v.shape[0], order="F")
    rows = np.ascontiguousarray(rows)
    wts = np.tile(wg * h, ncells_ax)
    # ordering: for cell c, gauss g -> row index c*q + g requires F-order fix
    return rows, wts


def tangential_seminorm(f: GridFunction, sigma: float, p: float,
                        representation: str = "slice", extend: bool = True) -> float:
    """[f]_{W_T^{sigma,p}}: slicewise tangential Gagliardo seminorm on the
    half-space (canonical slice representation), or the full double-integral
    representation over box pairs with ``representation='double'``."""
    grid = f.grid
    if grid.dim != 2:
        raise GridError("tangential seminorm is void for n = 1")
    if representation == "double":
        return float(pair_power_functional(f, sigma, p, tangential_only=True) ** (1.0 / p))
    rows, wts = _layer_rows(f, axis=1)
    h = grid.spacing
    vals = _rows_power_1d(rows, h, grid.lo[0], sigma, p,
                          extend_lo=extend, extend_hi=extend)
    return float((vals @ wts) ** (1.0 / p))


def normal_seminorm(f: GridFunction, sigma: float, p: float, extend: bool = True) -> float:
    """[f]_{W_N^{sigma,p}}: slicewise normal Gagliardo seminorm; exterior
    terms only above the box (the half-line is the physical domain)."""
    grid = f.grid
    if grid.dim != 2:
        raise GridError("normal seminorm is void for n = 1")
    if not grid.halfspace:
        raise GridError("normal seminorm requires a half-space grid")
    ft = GridFunction(make_transposed_grid(grid), np.ascontiguousarray(f.values.T))
    rows, wts = _layer_rows(ft, axis=1)
    vals = _rows_power_1d(rows, grid.spacing, grid.lo[1], sigma, p,
                          extend_lo=False, extend_hi=extend)
    return float((vals @ wts) ** (1.0 / p))


def make_transposed_grid(grid: Grid) -> Grid:
    return Grid(dim=2, spacing=grid.spacing, lo=(grid.lo[1], grid.lo[0]),
                hi=(grid.hi[1], grid.hi[0]), cells=(grid.cells[1], grid.cells[0]),
                halfspace=False)
