"""Uniform Cartesian meshes on (half-)space boxes and nodal grid functions.

Grid functions are continuous piecewise-multilinear interpolants of nodal
values, extended by zero outside their box.  All discrete differences use
exact lattice shifts; all norms integrate the interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss01

_COMMENSURATE_TOL = 1e-9


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform isotropic mesh on a box, axis ``dim-1`` optionally a half-space axis.

    If ``halfspace`` is set, the last axis starts at 0 and the grid function
    semantics extend by zero to the rest of the upper half-space (and to the
    lower half-space when a full-space view is requested).
    """

    dim: int
    spacing: float
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    cells: tuple[int, ...]
    halfspace: bool = False

    @property
    def node_shape(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.lo[axis] + self.spacing * np.arange(self.cells[axis] + 1)

    def node_coords(self) -> np.ndarray:
        """All node coordinates, shape ``node_shape + (dim,)``."""
        axes = [self.axis_nodes(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_centers(self) -> np.ndarray:
        axes = [self.lo[k] + self.spacing * (np.arange(self.cells[k]) + 0.5)
                for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        ok = np.ones(pts.shape[0], dtype=bool)
        for k in range(self.dim):
            ok &= (pts[:, k] >= self.lo[k]) & (pts[:, k] <= self.hi[k])
        return ok

    def lattice_offset(self, h: np.ndarray) -> tuple[int, ...]:
        """Convert a physical offset vector to integer lattice steps."""
        h = np.asarray(h, dtype=float).reshape(-1)
        if h.size != self.dim:
            raise GridError(f"offset has dimension {h.size}, grid has {self.dim}")
        steps = h / self.spacing
        rounded = np.round(steps)
        if np.max(np.abs(steps - rounded)) > _COMMENSURATE_TOL:
            raise GridError(f"offset {h} is not a lattice vector of spacing {self.spacing}")
        return tuple(int(r) for r in rounded)


def make_grid(dim: int, spacing: float, box, halfspace: bool = False) -> Grid:
    """Build a validated grid.

    ``box`` is a list of per-axis ``(lo, hi)`` intervals (a single pair in 1D).
    Axis lengths must be integer multiples of ``spacing``; every axis needs at
    least 4 cells; a half-space grid must have its last axis start at 0.
    """
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if not spacing > 0:
        raise GridError("spacing must be positive")
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    if box.shape != (dim, 2):
        raise GridError(f"box must give {dim} intervals, got shape {box.shape}")
    cells = []
    for k in range(dim):
        lo, hi = box[k]
        if not hi > lo:
            raise GridError(f"axis {k}: empty interval [{lo}, {hi}]")
        n = (hi - lo) / spacing
        if abs(n - round(n)) > _COMMENSURATE_TOL * max(1.0, abs(n)):
            raise GridError(f"axis {k}: length {hi - lo} is not a multiple of spacing {spacing}")
        n = int(round(n))
        if n < 4:
            raise GridError(f"axis {k}: needs at least 4 cells, got {n}")
        cells.append(n)
    if halfspace and abs(box[dim - 1, 0]) > _COMMENSURATE_TOL:
        raise GridError(f"half-space grid must start at 0 on axis {dim - 1}, got {box[dim - 1, 0]}")
    if halfspace:
        box[dim - 1, 0] = 0.0
    return Grid(dim=dim, spacing=float(spacing), lo=tuple(box[:, 0]), hi=tuple(box[:, 1]),
                cells=tuple(cells), halfspace=halfspace)


@dataclass
class GridFunction:
    """Nodal values on a grid; semantically the multilinear interpolant,
    identically zero outside the box."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.node_shape:
            raise GridError(f"values shape {self.values.shape} != node shape {self.grid.node_shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("grid function values must be finite")

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the interpolant (zero outside the box) at points.

        ``points``: array of shape ``(..., dim)`` (or ``(...)`` in 1D).
        """
        g = self.grid
        pts = np.asarray(points, dtype=float)
        if g.dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        shape_out = pts.shape[:-1]
        pts = pts.reshape(-1, g.dim)
        hloc = g.spacing
        rel = (pts - np.asarray(g.lo)) / hloc
        inside = np.ones(pts.shape[0], dtype=bool)
        for k in range(g.dim):
            inside &= (rel[:, k] >= 0.0) & (rel[:, k] <= g.cells[k])
        idx = []
        frac = []
        for k in range(g.dim):
            i = np.floor(rel[:, k]).astype(int)
            i = np.clip(i, 0, g.cells[k] - 1)
            idx.append(i)
            frac.append(rel[:, k] - i)
        out = np.zeros(pts.shape[0])
        if g.dim == 1:
            i0 = idx[0]
            t = frac[0]
            v = self.values
            out = (1 - t) * v[i0] + t * v[i0 + 1]
        else:
            i0, i1 = idx
            t0, t1 = frac
            v = self.values
            out = ((1 - t0) * (1 - t1) * v[i0, i1]
                   + t0 * (1 - t1) * v[i0 + 1, i1]
                   + (1 - t0) * t1 * v[i0, i1 + 1]
                   + t0 * t1 * v[i0 + 1, i1 + 1])
        out = np.where(inside, out, 0.0)
        return out.reshape(shape_out)

    def shifted_values(self, steps: tuple[int, ...]) -> np.ndarray:
        """Nodal values of x -> f(x + steps*h), reading zero outside the box."""
        v = self.values
        out = np.zeros_like(v)
        src = []
        dst = []
        for k, s in enumerate(steps):
            n = v.shape[k]
            if abs(s) >= n:
                return out
            if s >= 0:
                dst.append(slice(0, n - s))
                src.append(slice(s, n))
            else:
                dst.append(slice(-s, n))
                src.append(slice(0, n + s))
        out[tuple(dst)] = v[tuple(src)]
        return out

    def __add__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float):
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__


def _check_same_grid(f: GridFunction, g: GridFunction):
    if f.grid != g.grid:
        raise GridError("grid functions live on different grids")


def sample(field_fn, grid: Grid) -> GridFunction:
    """Sample a pointwise map on the grid nodes.

    ``field_fn`` takes an array of shape ``(..., dim)`` (or a scalar coordinate
    array in 1D) and returns values of shape ``(...)``.
    """
    coords = grid.node_coords()
    vals = np.asarray(field_fn(coords[..., 0] if grid.dim == 1 else coords), dtype=float)
    if vals.shape != grid.node_shape:
        vals = np.broadcast_to(vals, grid.node_shape).copy()
    if not np.all(np.isfinite(vals)):
        raise GridError("field returned non-finite values at grid nodes")
    return GridFunction(grid, vals)


def difference(f: GridFunction, h, order: int = 1) -> GridFunction:
    """First or second symmetric difference at lattice offset ``h``.

    order 1: f(x + h) - f(x); order 2: f(x + h) + f(x - h) - 2 f(x).
    The result lives on the same grid; out-of-box reads are zero.
    """
    if order not in (1, 2):
        raise GridError(f"order must be 1 or 2, got {order}")
    steps = f.grid.lattice_offset(h)
    if order == 1:
        vals = f.shifted_values(steps) - f.values
    else:
        neg = tuple(-s for s in steps)
        vals = f.shifted_values(steps) + f.shifted_values(neg) - 2.0 * f.values
    return GridFunction(f.grid, vals)


def even_reflect(f: GridFunction) -> GridFunction:
    """Even reflection across the half-space boundary: f~(x', x_n) = f(x', |x_n|)."""
    g = f.grid
    if not g.halfspace:
        raise GridError("even_reflect requires a half-space grid")
    ax = g.dim - 1
    n = g.cells[ax]
    box = [(g.lo[k], g.hi[k]) for k in range(g.dim)]
    box[ax] = (-g.hi[ax], g.hi[ax])
    full = make_grid(g.dim, g.spacing, box, halfspace=False)
    v = f.values
    mirrored = np.flip(v, axis=ax)
    refl = np.concatenate([mirrored.take(range(0, n), axis=ax), v], axis=ax)
    return GridFunction(full, refl)


def restrict_upper(f: GridFunction) -> GridFunction:
    """Restrict a full-space grid function to the upper half (x_n >= 0)."""
    g = f.grid
    ax = g.dim - 1
    if g.lo[ax] >= 0:
        raise GridError("grid does not extend below x_n = 0")
    k0 = int(round(-g.lo[ax] / g.spacing))
    box = [(g.lo[k], g.hi[k]) for k in range(g.dim)]
    box[ax] = (0.0, g.hi[ax])
    upper = make_grid(g.dim, g.spacing, box, halfspace=True)
    vals = f.values.take(range(k0, g.cells[ax] + 1), axis=ax)
    return GridFunction(upper, vals.copy())


# ---------------------------------------------------------------------------
# Regions: cell masks


def resolve_region(grid: Grid, region) -> np.ndarray:
    """Resolve a region spec to a boolean cell mask.

    Accepts None / "box" / "halfspace" / "fullspace" (all cells), a boolean
    cell array, or ``("ball", center, radius)`` selecting cells whose center
    lies in the ball.
    """
    if region is None or (isinstance(region, str) and region in ("box", "halfspace", "fullspace")):
        return np.ones(grid.cells, dtype=bool)
    if isinstance(region, np.ndarray):
        if region.shape != grid.cells or region.dtype != bool:
            raise GridError(f"cell mask must be boolean of shape {grid.cells}")
        return region
    if isinstance(region, tuple) and len(region) == 3 and region[0] == "ball":
        _, center, radius = region
        c = np.atleast_1d(np.asarray(center, dtype=float))
        centers = grid.cell_centers()
        d2 = np.zeros(grid.cells)
        for k in range(grid.dim):
            d2 += (centers[..., k] - c[k]) ** 2
        return d2 <= radius ** 2
    raise GridError(f"unrecognized region spec: {region!r}")


def lp_norm(f: GridFunction, p: float, region=None) -> float:
    """L^p norm of the interpolant over a cell-aligned region.

    Per-cell tensor Gauss quadrature (5 points per axis), exact for
    polynomial integrands up to degree 9 per axis.
    """
    if not (1 <= p < np.inf):
        raise GridError(f"p must be in [1, inf), got {p}")
    mask = resolve_region(f.grid, region)
    if not mask.any():
        raise GridError("empty region")
    return float(_cell_integral(f, lambda v: np.abs(v) ** p, mask) ** (1.0 / p))


def inner_product(f: GridFunction, g: GridFunction, region=None) -> float:
    """Exact integral of f*g over the region (both multilinear)."""
    _check_same_grid(f, g)
    mask = resolve_region(f.grid, region)
    gr = f.grid
    x, w = gauss01(3)
    h = gr.spacing
    if gr.dim == 1:
        idx = np.nonzero(mask)[0]
        a = f.values[idx][:, None]
        b = f.values[idx + 1][:, None]
        fa = (1 - x) * a + x * b
        a2 = g.values[idx][:, None]
        b2 = g.values[idx + 1][:, None]
        ga = (1 - x) * a2 + x * b2
        return float(np.sum((fa * ga) @ w) * h)
    i, j = np.nonzero(mask)
    vals = 0.0
    wx = np.multiply.outer(w, w)
    for f_, g_ in ((f, g),):
        c00 = f_.values[i, j]; c10 = f_.values[i + 1, j]
        c01 = f_.values[i, j + 1]; c11 = f_.values[i + 1, j + 1]
        d00 = g_.values[i, j]; d10 = g_.values[i + 1, j]
        d01 = g_.values[i, j + 1]; d11 = g_.values[i + 1, j + 1]
        X = x[:, None]; Y = x[None, :]
        fv = (c00[:, None, None] * (1 - X) * (1 - Y) + c10[:, None, None] * X * (1 - Y)
              + c01[:, None, None] * (1 - X) * Y + c11[:, None, None] * X * Y)
        gv = (d00[:, None, None] * (1 - X) * (1 - Y) + d10[:, None, None] * X * (1 - Y)
              + d01[:, None, None] * (1 - X) * Y + d11[:, None, None] * X * Y)
        vals += np.sum(fv * gv * wx[None, :, :])
    return float(vals * h * h)


def _cell_integral(f: GridFunction, transform, mask: np.ndarray, npt: int = 5) -> float:
    """Integrate transform(interpolant) over masked cells with tensor Gauss."""
    g = f.grid
    h = g.spacing
    x, w = gauss01(npt)
    if g.dim == 1:
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            return 0.0
        a = f.values[idx][:, None]
        b = f.values[idx + 1][:, None]
        vals = (1 - x) * a + x * b
        return float(np.sum(transform(vals) @ w) * h)
    i, j = np.nonzero(mask)
    if i.size == 0:
        return 0.0
    c00 = f.values[i, j]; c10 = f.values[i + 1, j]
    c01 = f.values[i, j + 1]; c11 = f.values[i + 1, j + 1]
    X = x[:, None]; Y = x[None, :]
    fv = (c00[:, None, None] * (1 - X) * (1 - Y) + c10[:, None, None] * X * (1 - Y)
          + c01[:, None, None] * (1 - X) * Y + c11[:, None, None] * X * Y)
    wx = np.multiply.outer(w, w)
    return float(np.sum(transform(fv) * wx[None, :, :]) * h * h)


def weighted_power_integral(f: GridFunction, p: float, gamma: float,
                            grading_depth: int = 12) -> float:
    """Integral of |f|^p * x_n^(-gamma) over the half-space box.

    The first cell layer is subdivided geometrically (factor 2) toward
    x_n = 0 down to ``grading_depth`` levels; the final sliver uses the exact
    linear structure of the interpolant (requires zero boundary trace when
    gamma >= 1).  Layers above use tensor Gauss with the weight evaluated.
    """
    g = f.grid
    if not g.halfspace:
        raise GridError("weighted integral requires a half-space grid")
    ax = g.dim - 1
    h = g.spacing
    bottom = np.take(f.values, 0, axis=ax)
    p_ = float(p)
    if gamma >= 1.0 - 1e-12 and np.max(np.abs(bottom)) > 1e-13 * max(1.0, np.max(np.abs(f.values))):
        raise GridError("weighted integral diverges: nonzero trace on x_n = 0")

    xg, wg = gauss01(8)
    total = 0.0

    def layer_integral(y_lo, y_hi, n_y=8):
        # integrate |f|^p x_n^-gamma over the strip [y_lo, y_hi] (tensor Gauss)
        ys, ws = gauss01(n_y)
        y = y_lo + (y_hi - y_lo) * ys
        wy = ws * (y_hi - y_lo) * y ** (-gamma)
        acc = 0.0
        if g.dim == 1:
            vals = f(y)
            acc = np.sum(np.abs(vals) ** p_ * wy)
        else:
            xs = g.lo[0] + h * (np.arange(g.cells[0])[:, None] + xg[None, :])
            X, Yv = np.meshgrid(xs.ravel(), y, indexing="ij")
            pts = np.stack([X.ravel(), Yv.ravel()], axis=-1)
            vals = f(pts).reshape(xs.size, y.size)
            wx = np.tile(wg * h, g.cells[0])
            acc = np.einsum("i,ij,j->", wx, np.abs(vals) ** p_, wy)
        return acc

    # layers above the first cell
    for layer in range(1, g.cells[ax]):
        y_lo = layer * h
        y_hi = (layer + 1) * h
        n_y = 8 if layer <= 4 else 5
        total += layer_integral(y_lo, y_hi, n_y)

    # first layer: geometric grading toward 0
    for k in range(grading_depth):
        total += layer_integral(h * 2.0 ** (-k - 1), h * 2.0 ** (-k))
    # final sliver [0, h*2^-depth]: f is linear in x_n there, f = (x_n/h)*f(.,h)
    eps = h * 2.0 ** (-grading_depth)
    expo = p_ - gamma
    if np.max(np.abs(bottom)) <= 1e-13 * max(1.0, np.max(np.abs(f.values))):
        # |f|^p ~ (x_n/h)^p |f(., h)|^p exactly on the sliver
        if g.dim == 1:
            gfun = abs(float(f(np.array([eps]))[0])) ** p_ if eps > 0 else 0.0
            # f(eps) = (eps/h) f(h): rescale to the layer-top value
            top = abs(float(f(np.array([h]))[0])) ** p_
            total += top * eps ** (expo + 1.0) / ((expo + 1.0) * h ** p_)
        else:
            xs = g.lo[0] + h * (np.arange(g.cells[0])[:, None] + xg[None, :])
            pts = np.stack([xs.ravel(), np.full(xs.size, h)], axis=-1)
            top = np.abs(f(pts)) ** p_
            wx = np.tile(wg * h, g.cells[0])
            total += float(wx @ top) * eps ** (expo + 1.0) / ((expo + 1.0) * h ** p_)
    else:
        # bounded weight (gamma < 1): midpoint estimate of the sliver
        total += layer_integral(eps * 1e-6 + 0.0, eps, 6) if gamma < 1.0 else 0.0
    return float(total)


def boundary_weighted_norm(f: GridFunction, s: float) -> float:
    """|| f / x_n^s ||_{L^2} over the half-space box.

    Requires f to vanish on the boundary layer nodes when s >= 1/2.
    """
    return float(np.sqrt(weighted_power_integral(f, 2.0, 2.0 * s)))
