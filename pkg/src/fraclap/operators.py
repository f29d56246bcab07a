"""Pointwise fractional operators by radial-shell quadrature: D^t and its
inverse, the regional operator on the half-space, and cutoff commutators.

Convention: D^t has symbol |xi|^t (see kernels.operator_constants); as an
integral operator

    D^t f(x) = -(c2/2) Int (f(x+z) + f(x-z) - 2 f(x)) |z|^(-n-t) dz,

with the far field beyond the support handled analytically.  On interpolated
data the quadrature is reliable for t in (0, 1); nodal kinks make higher
orders ill-defined pointwise.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, GridError, GridFunction
from .kernels import ParameterError, operator_constants, tail_weight
from .quadrature import gauss01, gauss_jacobi01

_NEAR_DEPTH = 14
_GL = 6


def _radial_nodes(h: float, R: float):
    """Radial nodes/weights on [h 2^-depth, R] (plain dr weights)."""
    pieces = []
    for k in range(_NEAR_DEPTH, 0, -1):
        pieces.append((h * 2.0 ** (-k), h * 2.0 ** (-k + 1)))
    r = h
    while r < R * (1 - 1e-12):
        step = min(h / 2.0 if r < 8.0 * h else 0.25 * r, R - r)
        pieces.append((r, r + step))
        r += step
    xg, wg = gauss01(_GL)
    rs = np.concatenate([a + (b - a) * xg for a, b in pieces])
    ws = np.concatenate([(b - a) * wg for a, b in pieces])
    return rs, ws, h * 2.0 ** (-_NEAR_DEPTH)


def _angles(r: float, h: float, n_max: int = 360):
    n = int(min(n_max, max(12, 6 * np.ceil(r / h))))
    th = (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    return th, 2.0 * np.pi / n


def _cover_radius(points: np.ndarray, grid: Grid) -> np.ndarray:
    lo = np.asarray(grid.lo)
    hi = np.asarray(grid.hi)
    far = np.maximum(np.abs(points - lo), np.abs(points - hi))
    return np.sqrt(np.sum(far ** 2, axis=-1))


def frac_laplacian(f: GridFunction, t: float, points, shell_range: float | None = None,
                   far_tail: bool = True) -> np.ndarray:
    """D^t f at the given points (symbol |xi|^t convention).

    ``shell_range`` truncates the second-difference quadrature at that radius
    (default covers the support, where the analytic constant tail takes over);
    ``far_tail=False`` evaluates the truncated principal part only.
    """
    if not (0.0 < t < 2.0):
        raise ParameterError(f"t must lie in (0,2), got {t}")
    grid = f.grid
    n = grid.dim
    pts = np.atleast_2d(np.asarray(points, dtype=float).reshape(-1, n))
    c2, _ = operator_constants(n, t)
    h = grid.spacing
    fx = f(pts)

    R = float(np.max(_cover_radius(pts, grid))) if shell_range is None else float(shell_range)
    if R < 4.0 * h:
        raise GridError("shell range under-resolved: fewer than 4 shells")
    rs, ws, rmin = _radial_nodes(h, R)

    if n == 1:
        vp = f((pts[:, 0][:, None] + rs[None, :])[..., None])
        vm = f((pts[:, 0][:, None] - rs[None, :])[..., None])
        integrand = (vp + vm - 2.0 * fx[:, None]) * (rs ** (-1.0 - t))[None, :] * 2.0
        out = integrand @ ws
        if t < 1.0:
            out = out + integrand[:, 0] * rmin / (1.0 - t)
        if far_tail:
            out = out + (-2.0 * fx) * 2.0 * R ** (-t) / t
    else:
        out = np.zeros(pts.shape[0])
        first = None
        for r, w in zip(rs, ws):
            th, wth = _angles(r, h)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1) * r
            vp = f(pts[:, None, :] + dirs[None, :, :])
            vm = f(pts[:, None, :] - dirs[None, :, :])
            integ = (vp + vm - 2.0 * fx[:, None]).sum(axis=1) * wth * r ** (-1.0 - t)
            if first is None:
                first = integ
            out += w * integ
        if t < 1.0:
            out = out + first * rmin / (1.0 - t)
        if far_tail:
            out = out + (-2.0 * fx) * 2.0 * np.pi * R ** (-t) / t
    return -0.5 * c2 * out


def riesz_potential(f: GridFunction, t: float, points) -> np.ndarray:
    """D^-t f(x) = c3 Int |x-y|^(t-n) f(y) dy over the support box."""
    grid = f.grid
    n = grid.dim
    if not (0.0 < t < n):
        raise ParameterError(f"t must lie in (0, n), got {t}")
    _, c3 = operator_constants(n, t)
    pts = np.atleast_2d(np.asarray(points, dtype=float).reshape(-1, n))
    out = _riesz_1d(f, t, pts[:, 0]) if n == 1 else _riesz_2d(f, t, pts)
    return c3 * out


def _riesz_1d(f: GridFunction, t: float, xs: np.ndarray) -> np.ndarray:
    """Exact piecewise-analytic Int |x-y|^(t-1) f(y) dy for multilinear f."""
    grid = f.grid
    edges = grid.axis_nodes(0)
    v = f.values
    h = grid.spacing
    m = (v[1:] - v[:-1]) / h                       # cell slopes
    X = xs[:, None]
    A = v[None, :-1] + m[None, :] * (X - edges[None, :-1])   # f(x + u) = A + m u
    # right side: u in [edge_k - x, edge_{k+1} - x] clipped to u >= 0
    ua = np.maximum(edges[None, :-1] - X, 0.0)
    ub = np.maximum(edges[None, 1:] - X, 0.0)
    right = np.sum(A * (ub ** t - ua ** t) / t
                   + m[None, :] * (ub ** (t + 1.0) - ua ** (t + 1.0)) / (t + 1.0), axis=1)
    # left side: u = x - y in [x - edge_{k+1}, x - edge_k] clipped, f = A - m u
    ua = np.maximum(X - edges[None, 1:], 0.0)
    ub = np.maximum(X - edges[None, :-1], 0.0)
    left = np.sum(A * (ub ** t - ua ** t) / t
                  - m[None, :] * (ub ** (t + 1.0) - ua ** (t + 1.0)) / (t + 1.0), axis=1)
    return left + right


def _riesz_2d(f: GridFunction, t: float, pts: np.ndarray) -> np.ndarray:
    """Far cells by tensor Gauss, polar patch over the near cells."""
    grid = f.grid
    h = grid.spacing
    xq, wq = gauss01(4)
    dim = 2
    base = np.stack(np.meshgrid(*[grid.lo[k] + h * np.arange(grid.cells[k])
                                  for k in range(dim)], indexing="ij"), axis=-1).reshape(-1, dim)
    gx, gy = np.meshgrid(xq, xq, indexing="ij")
    loc = np.stack([gx.ravel(), gy.ravel()], axis=-1) * h
    W = np.outer(wq, wq).ravel() * h * h
    ynodes = base[:, None, :] + loc[None, :, :]
    fy = f(ynodes.reshape(-1, 2)).reshape(base.shape[0], -1)
    cmin = base
    out = np.zeros(pts.shape[0])
    patch = 1.5 * h
    for i, x in enumerate(pts):
        d0 = np.maximum(np.maximum(cmin[:, 0] - x[0], x[0] - (cmin[:, 0] + h)), 0.0)
        d1 = np.maximum(np.maximum(cmin[:, 1] - x[1], x[1] - (cmin[:, 1] + h)), 0.0)
        dist = np.hypot(d0, d1)
        far = dist > patch * 0.999
        dmat = ynodes[far] - x[None, None, :]
        r = np.sqrt(np.sum(dmat * dmat, axis=-1))
        out[i] = np.einsum("cg,g,cg->", r ** (t - 2.0), W, fy[far])
        out[i] += _polar_cells(f, t, x, np.nonzero(~far)[0])
    return out


def _polar_cells(f: GridFunction, t: float, x: np.ndarray, cell_flats) -> float:
    """Polar integration of |x-y|^(t-2) f(y) over the listed cells."""
    grid = f.grid
    h = grid.spacing
    xj, wj = gauss_jacobi01(10, t - 1.0)
    xq, wq = gauss01(10)
    nth = 24
    total = 0.0
    ncy = grid.cells[1]
    for flat in np.atleast_1d(cell_flats):
        ci, cj = divmod(int(flat), ncy)
        cx = grid.lo[0] + ci * h
        cy = grid.lo[1] + cj * h
        rect = ((cx - x[0], cx + h - x[0]), (cy - x[1], cy + h - x[1]))
        corners = [(rect[0][a], rect[1][b]) for a in range(2) for b in range(2)]
        angs = sorted({float(np.arctan2(cy_, cx_)) for cx_, cy_ in corners
                       if abs(cx_) > 1e-14 or abs(cy_) > 1e-14})
        if not angs:
            continue
        sectors = list(zip(angs, angs[1:] + [angs[0] + 2 * np.pi]))
        for t0, t1 in sectors:
            if t1 - t0 < 1e-13:
                continue
            ths = t0 + (t1 - t0) * ((np.arange(nth) + 0.5) / nth)
            wth = (t1 - t0) / nth
            for th in ths:
                cw, sw = np.cos(th), np.sin(th)
                rin, rout = _ray_rect_span(cw, sw, rect)
                if rout <= rin + 1e-15:
                    continue
                if rin < 1e-13:
                    rr = rout * xj
                    ww = wj * rout ** t
                else:
                    rr = rin + (rout - rin) * xq
                    ww = wq * (rout - rin) * rr ** (t - 1.0)
                ys = x[None, :] + rr[:, None] * np.array([cw, sw])[None, :]
                total += wth * float(ww @ f(ys))
    return total


def _ray_rect_span(cw: float, sw: float, rect) -> tuple[float, float]:
    rin, rout = 0.0, np.inf
    for c, (lo, hi) in zip((cw, sw), rect):
        if abs(c) < 1e-14:
            if lo > 1e-14 or hi < -1e-14:
                return 0.0, 0.0
            continue
        r0, r1 = lo / c, hi / c
        if r0 > r1:
            r0, r1 = r1, r0
        rin = max(rin, r0)
        rout = min(rout, r1)
    return max(rin, 0.0), max(rout, 0.0)


# ---------------------------------------------------------------------------
# regional operator and commutator on the half-space


def _halfspace_ball_complement(x: np.ndarray, R: float, s: float, n: int) -> float:
    """Int over R^n_+ minus B(x,R) of |x-y|^(-n-2s) dy."""
    xn = float(x[n - 1])
    ts = 2.0 * s
    if n == 1:
        out = R ** (-ts) / ts
        if xn > R:
            out += (R ** (-ts) - xn ** (-ts)) / ts
        return out
    # directions with sin(theta) >= 0 never exit; others exit at r = xn/(-sin)
    xg, wg = gauss01(32)

    def seg(t0, t1, finite):
        th = t0 + (t1 - t0) * xg
        w = wg * (t1 - t0)
        if not finite:
            return float(np.sum(w) * R ** (-ts) / ts)
        rexit = xn / np.maximum(-np.sin(th), 1e-300)
        val = np.where(rexit > R, (R ** (-ts) - rexit ** (-ts)) / ts, 0.0)
        return float(w @ val)

    total = seg(0.0, np.pi, finite=False)
    if xn >= R:
        total += seg(np.pi, 2.0 * np.pi, finite=True)
    else:
        a = np.arcsin(xn / R)
        total += seg(np.pi, np.pi + a, finite=True)
        total += seg(2.0 * np.pi - a, 2.0 * np.pi, finite=True)
        # between: rays exit before radius R, no contribution
    return total


def _as_callable(v):
    if isinstance(v, GridFunction):
        return v
    return v


def regional_apply(v, s: float, points, grid: Grid) -> np.ndarray:
    """c * P.V. Int_{R^n_+} (v(x) - v(y)) |x-y|^(-n-2s) dy for v supported in
    the grid box (v a GridFunction or a callable with the same support).

    Pointwise values of interpolants are reliable away from their kink set
    (cell interiors); at nodes the principal value need not exist for s > 1/2.
    """
    n = grid.dim
    if not grid.halfspace:
        raise GridError("regional operator requires a half-space grid")
    if not (0.5 < s < 1.0):
        raise ParameterError(f"s must lie in (1/2,1), got {s}")
    c, _ = operator_constants(n, 2.0 * s)
    pts = np.atleast_2d(np.asarray(points, dtype=float).reshape(-1, n))
    h = grid.spacing
    out = np.zeros(pts.shape[0])
    Rcov = _cover_radius(pts, grid)
    for i, x in enumerate(pts):
        xn = x[n - 1]
        if xn <= 0:
            raise GridError("evaluation points must lie in the open half-space")
        R = Rcov[i]
        rs, ws, rmin = _radial_nodes(h, R)
        vx = float(v(x[None, :])[0])
        acc = 0.0
        first = None
        for r, wr in zip(rs, ws):
            if n == 1:
                dirs = np.array([[r], [-r]])
                wth = 1.0
            else:
                th, wth = _angles(r, h)
                dirs = np.stack([np.cos(th), np.sin(th)], axis=-1) * r
            yp = x[None, :] + dirs
            ym = x[None, :] - dirs
            if r < xn:
                ang = (2.0 * vx - v(yp) - v(ym)).sum() * wth * 0.5
            else:
                sp = yp[:, n - 1] > 0
                sm = ym[:, n - 1] > 0
                ang = ((vx - v(yp[sp])).sum() + (vx - v(ym[sm])).sum()) * wth * 0.5
            integ = ang * r ** (-1.0 - 2.0 * s)
            if first is None:
                first = integ
            acc += wr * integ
        acc += first * rmin / (2.0 - 2.0 * s)
        acc += vx * _halfspace_ball_complement(x, R, s, n)
        out[i] = acc
    return c * out


def commutator_regional(eta, w: GridFunction, s: float, points,
                        eta_one_radius: float | None = None, center=None) -> np.ndarray:
    """[regional^s, eta](w)(x) = c * P.V. Int_{R^n_+} w(y)(eta(x)-eta(y)) K dy.

    ``eta`` must be a smooth callable: nodal cutoffs kink at mesh points and
    the commutator of an interpolated cutoff diverges there for s > 1/2.
    With ``eta_one_radius`` r0 and ``center`` (eta == 1 on B(center, r0)),
    points in that ball use the reduced far-field formula
    2c Int_{|y-x| > r0 - |x-center|} w(y)(eta(y)-1) K dy.
    """
    grid = w.grid
    n = grid.dim
    if not grid.halfspace:
        raise GridError("commutator requires a half-space grid")
    c, _ = operator_constants(n, 2.0 * s)
    pts = np.atleast_2d(np.asarray(points, dtype=float).reshape(-1, n))
    h = grid.spacing
    out = np.zeros(pts.shape[0])
    Rcov = _cover_radius(pts, grid)
    reduced = eta_one_radius is not None and center is not None
    ctr = np.asarray(center, dtype=float).reshape(-1) if reduced else None
    for i, x in enumerate(pts):
        xn = x[n - 1]
        R = Rcov[i]
        if reduced:
            gap = eta_one_radius - float(np.linalg.norm(x - ctr))
            if gap <= 0:
                raise GridError("reduced commutator needs eta == 1 around the point")
        rs, ws, rmin = _radial_nodes(h, R)
        ex = float(eta(x[None, :])[0])
        acc = 0.0
        first = None
        for r, wr in zip(rs, ws):
            if reduced and r <= gap:
                continue
            if n == 1:
                dirs = np.array([[r], [-r]])
                wth = 1.0
            else:
                th, wth = _angles(r, h)
                dirs = np.stack([np.cos(th), np.sin(th)], axis=-1) * r
            yp = x[None, :] + dirs
            ym = x[None, :] - dirs
            sp = yp[:, n - 1] > 0 if r >= xn else slice(None)
            sm = ym[:, n - 1] > 0 if r >= xn else slice(None)
            ang = ((w(yp[sp]) * (ex - eta(yp[sp]))).sum()
                   + (w(ym[sm]) * (ex - eta(ym[sm]))).sum()) * wth * 0.5
            integ = ang * r ** (-1.0 - 2.0 * s)
            if first is None and not reduced:
                first = integ
            acc += wr * integ
        if first is not None:
            acc += first * rmin / (2.0 - 2.0 * s)
        out[i] = acc
    return c * out


def duality_rhs(G: GridFunction, t: float, phi: GridFunction) -> float:
    """g[phi] = Int G D^t phi (plain L^2 pairing at t = 0)."""
    from .grid import inner_product
    if t == 0.0:
        return inner_product(G, phi)
    if not (0.0 < t < 1.0):
        raise ParameterError(f"t must lie in [0, 1) for the duality pairing, got {t}")
    for k in range(phi.grid.dim):
        if phi.grid.lo[k] < G.grid.lo[k] - 1e-12 or phi.grid.hi[k] > G.grid.hi[k] + 1e-12:
            raise GridError("G's box must contain the test function's box")
    grid = G.grid
    h = grid.spacing
    xq, wq = gauss01(3)
    dim = grid.dim
    if dim == 1:
        edges = grid.axis_nodes(0)
        ys = (edges[:-1][:, None] + h * xq[None, :]).ravel()
        Wy = np.tile(wq * h, grid.cells[0])
        dt = frac_laplacian(phi, t, ys[:, None])
        return float(np.sum(Wy * G(ys[:, None]) * dt))
    base = np.stack(np.meshgrid(*[grid.lo[k] + h * np.arange(grid.cells[k])
                                  for k in range(dim)], indexing="ij"), axis=-1).reshape(-1, dim)
    gx, gy = np.meshgrid(xq, xq, indexing="ij")
    loc = np.stack([gx.ravel(), gy.ravel()], axis=-1) * h
    W = np.outer(wq, wq).ravel() * h * h
    pts = (base[:, None, :] + loc[None, :, :]).reshape(-1, dim)
    dt = frac_laplacian(phi, t, pts)
    return float(np.sum(np.tile(W, base.shape[0]) * G(pts) * dt))
