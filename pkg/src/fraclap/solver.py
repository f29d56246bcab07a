"""Energy-minimizing solutions of the regional Dirichlet problem with
support constraints, Euler-Lagrange residuals, and the cutoff-localized
construction with its commutator remainder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .forms import SymmetricForm, assemble_regional_form
from .grid import Grid, GridError, GridFunction, resolve_region
from .kernels import KernelSpec
from .operators import commutator_regional, duality_rhs, frac_laplacian
from .quadrature import gauss01


class SolverError(RuntimeError):
    pass


@dataclass
class DirichletProblem:
    """Support-constrained regional Dirichlet problem with datum g = D^t G."""

    spec: KernelSpec
    grid: Grid
    G: GridFunction
    support: np.ndarray | None = None     # cell mask where the solution may live
    tail: bool = True

    def __post_init__(self):
        if self.support is None:
            self.support = np.ones(self.grid.cells, dtype=bool)
        self.support = resolve_region(self.grid, self.support)
        if not self.support.any():
            raise GridError("empty support mask")

    def dof_nodes(self) -> np.ndarray:
        """Flat indices of nodes whose every incident cell is in the mask
        (hats of these nodes stay inside the mask; all others are pinned)."""
        g = self.grid
        ns = g.node_shape
        ok = np.ones(ns, dtype=bool)
        for corner in np.ndindex(*([2] * g.dim)):
            ext = np.zeros(ns, dtype=bool)
            sl_nodes = tuple(slice(1 - c, ns[k] - c) for k, c in enumerate(corner))
            ext[sl_nodes] = self.support
            ok &= ext
        return np.nonzero(ok.ravel())[0]


@dataclass
class Solution:
    w: GridFunction
    energy: float
    el_residual: float
    iterations: int
    form: SymmetricForm = field(repr=False, default=None)
    rhs: np.ndarray = field(repr=False, default=None)
    dofs: np.ndarray = field(repr=False, default=None)


def load_vector(G: GridFunction, t: float, grid: Grid, weight=None) -> np.ndarray:
    """b[a] = Int (weight *) G D^t phi_a for every node a.

    t = 0 uses exact per-cell Gauss of the product of interpolants; t > 0
    evaluates D^t G once at the quadrature points and integrates against the
    hats (self-adjoint form of the pairing).
    """
    h = grid.spacing
    dim = grid.dim
    xq, wq = gauss01(3)
    b = np.zeros(grid.node_shape)
    base = np.stack(np.meshgrid(*[grid.lo[k] + h * np.arange(grid.cells[k])
                                  for k in range(dim)], indexing="ij"), axis=-1)
    base = base.reshape(-1, dim)
    grids = np.meshgrid(*([xq] * dim), indexing="ij")
    loc = np.stack([g.ravel() for g in grids], axis=-1) * h
    W = np.ones(loc.shape[0])
    for k in range(dim):
        W = W * np.meshgrid(*([wq] * dim), indexing="ij")[k].ravel() * h
    pts = (base[:, None, :] + loc[None, :, :]).reshape(-1, dim)
    if t == 0.0:
        gv = G(pts)
    else:
        gv = frac_laplacian(G, t, pts)
    if weight is not None:
        gv = gv * weight(pts)
    gv = gv.reshape(base.shape[0], loc.shape[0])
    cells_idx = np.unravel_index(np.arange(base.shape[0]), grid.cells)
    for corner in np.ndindex(*([2] * dim)):
        Bc = np.ones(loc.shape[0])
        for k in range(dim):
            tt = loc[:, k] / h
            Bc = Bc * (tt if corner[k] == 1 else 1.0 - tt)
        vals = gv @ (W * Bc)
        np.add.at(b, tuple(cells_idx[k] + corner[k] for k in range(dim)), vals)
    return b.ravel()


def jacobi_cg(A: np.ndarray, b: np.ndarray, tol: float, maxiter: int):
    """Jacobi-preconditioned conjugate gradients; relative residual stop."""
    d = np.diag(A).copy()
    d[d <= 0] = 1.0
    x = np.zeros_like(b)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = r @ z
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0
    for k in range(maxiter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, k + 1
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge within {maxiter} iterations "
                      f"(residual {np.linalg.norm(r)/bnorm:.2e}); refine the "
                      "grading or loosen the tolerance")


def solve_constrained(problem: DirichletProblem, tol: float = 1e-10,
                      method: str = "cg", form: SymmetricForm | None = None) -> Solution:
    """Minimize E(v) = 1/2 [v]^2 + Int G D^t v over the support-constrained
    nodal class: solve A w = -b on the free nodes."""
    if not tol > 0:
        raise SolverError("tol must be positive")
    g = problem.grid
    s = problem.spec.s
    if form is None:
        form = assemble_regional_form(g, s, tail=problem.tail)
    A = form.matrix
    b = load_vector(problem.G, problem.spec.t, g)
    dofs = problem.dof_nodes()
    if dofs.size == 0:
        raise SolverError("support mask admits no free nodes")
    Add = A[np.ix_(dofs, dofs)]
    bd = b[dofs]
    if method == "direct":
        c, low = cho_factor(Add, check_finite=False)
        wd = cho_solve((c, low), -bd, check_finite=False)
        iters = 0
    elif method == "cg":
        wd, iters = jacobi_cg(Add, -bd, tol, maxiter=10 * Add.shape[0])
    else:
        raise SolverError(f"unknown method {method!r}")
    w = np.zeros(g.n_nodes)
    w[dofs] = wd
    wf = GridFunction(g, w.reshape(g.node_shape))
    energy = 0.5 * float(w @ (A @ w)) + float(b @ w)
    res = el_residual_values(A, b, w, dofs)
    return Solution(w=wf, energy=energy, el_residual=res, iterations=iters,
                    form=form, rhs=b, dofs=dofs)


def el_residual_values(A: np.ndarray, b: np.ndarray, w: np.ndarray,
                       dofs: np.ndarray) -> float:
    r = (A @ w + b)[dofs]
    scale = (np.max(np.sum(np.abs(A[dofs][:, dofs]), axis=1)) * np.max(np.abs(w))
             + np.max(np.abs(b[dofs])) + 1e-300)
    return float(np.max(np.abs(r)) / scale)


def el_residual(w: GridFunction, problem: DirichletProblem,
                form: SymmetricForm | None = None, dofs=None) -> float:
    """Euler-Lagrange defect max_a |(A w + b)_a| / (|A| |w| + |b|) over the
    free test basis."""
    if form is None:
        form = assemble_regional_form(problem.grid, problem.spec.s, tail=problem.tail)
    b = load_vector(problem.G, problem.spec.t, problem.grid)
    if dofs is None:
        dofs = problem.dof_nodes()
    return el_residual_values(form.matrix, b, w.values.ravel(), dofs)


@dataclass
class CutoffLocalized:
    """Output of the cutoff-localized construction: w = eta * w_tilde plus the
    commutator remainder evaluated on probe points."""

    w: GridFunction
    w_tilde: GridFunction
    probes: np.ndarray
    remainder: np.ndarray
    solution: Solution


def solve_cutoff_localized(G: GridFunction, spec: KernelSpec, x0, lam: float,
                           eta_tilde, eta, h_offset, probes=None,
                           form: SymmetricForm | None = None,
                           eta_one_radius: float | None = None) -> CutoffLocalized:
    """Solve for w_tilde with datum eta_tilde * D^t G on the class supported in
    B(x0, 10 lam), set w = eta * w_tilde, and evaluate the remainder
    g = delta_{2,h} [regional^s, eta](w_tilde) on the probe points."""
    grid = G.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = grid.dim
    for k in range(dim):
        lo_ok = grid.lo[k] <= x0[k] - 10 * lam or (grid.halfspace and k == dim - 1)
        hi_ok = grid.hi[k] >= x0[k] + 10 * lam
        if not (lo_ok and hi_ok):
            raise GridError("B(x0, 10 lam) exceeds the computational box")
    hvec = np.atleast_1d(np.asarray(h_offset, dtype=float))
    if dim == 2 and abs(hvec[1]) > 1e-14:
        raise GridError("offset must be tangential")
    if np.linalg.norm(hvec) >= lam:
        raise GridError("offset must satisfy |h| < lam")

    mask = resolve_region(grid, ("ball", x0, 10 * lam))
    problem = DirichletProblem(spec=spec, grid=grid, G=G, support=mask, tail=True)
    g = grid
    if form is None:
        form = assemble_regional_form(g, spec.s, tail=True)
    A = form.matrix
    b = load_vector(G, spec.t, g, weight=eta_tilde)
    dofs = problem.dof_nodes()
    Add = A[np.ix_(dofs, dofs)]
    wd, iters = jacobi_cg(Add, -b[dofs], 1e-10, maxiter=10 * Add.shape[0])
    wt = np.zeros(g.n_nodes)
    wt[dofs] = wd
    w_tilde = GridFunction(g, wt.reshape(g.node_shape))
    sol = Solution(w=w_tilde, energy=0.5 * float(wt @ (A @ wt)) + float(b @ wt),
                   el_residual=el_residual_values(A, b, wt, dofs),
                   iterations=iters, form=form, rhs=b, dofs=dofs)

    coords = g.node_coords().reshape(-1, dim)
    eta_nodes = eta(coords).reshape(g.node_shape)
    w = GridFunction(g, eta_nodes * w_tilde.values)

    if probes is None:
        sel = np.linalg.norm(coords - x0, axis=1) < 2 * lam
        sel &= coords[:, dim - 1] > 0.2 * lam if dim >= 1 else sel
        cand = coords[sel]
        step = max(1, len(cand) // 12)
        probes = cand[::step][:12]
    probes = np.atleast_2d(probes)

    def comm(points):
        return commutator_regional(eta, w_tilde, spec.s, points,
                                   eta_one_radius=eta_one_radius, center=x0)

    vals = (comm(probes + hvec) + comm(probes - hvec) - 2.0 * comm(probes))
    return CutoffLocalized(w=w, w_tilde=w_tilde, probes=probes, remainder=vals,
                           solution=sol)
