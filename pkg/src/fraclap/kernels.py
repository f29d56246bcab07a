"""Kernel exponents, normalization constants, slice constants, and the
semi-analytic complement masses used for truncation tail corrections.

The kernel throughout is |x - y|^(-e) with e = n + 2s for the bilinear form
of order s, and e = n + sigma*p for W^{sigma,p} seminorms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as Gamma, hyp2f1

from .quadrature import gauss_jacobi01


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Exponent bundle (s, t, p, s_tilde) for the half-space estimates.

    s: order of the regional operator, in (1/2, 1)
    t: order of the right-hand-side operator, in [0, s)
    p: integrability exponent, in [2, inf)
    s_tilde: tangential target order, in (s, 1) and < 2s - t
    """

    s: float
    t: float = 0.0
    p: float = 2.0
    s_tilde: float | None = None

    def __post_init__(self):
        if not (0.5 < self.s < 1.0):
            raise ParameterError(f"s must lie in (1/2, 1), got {self.s}")
        if not (0.0 <= self.t < self.s):
            raise ParameterError(f"t must lie in [0, s), got t={self.t}, s={self.s}")
        if not (2.0 <= self.p < np.inf):
            raise ParameterError(f"p must lie in [2, inf), got {self.p}")
        if self.s_tilde is None:
            cap = min(1.0, 2.0 * self.s - self.t)
            object.__setattr__(self, "s_tilde", 0.5 * (self.s + cap))
        st = self.s_tilde
        if not (self.s < st < 1.0) or not (st < 2.0 * self.s - self.t):
            raise ParameterError(
                f"s_tilde must lie in (s, 1) with s_tilde < 2s - t, got {st}")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)


def kernel_constants(n: int, t: float) -> tuple[float, float]:
    """Normalization constants (c_lap, c_riesz) of the order-t operator pair.

    c_lap(n,t) = 2^t Gamma((n+t)/2) / (pi^(n/2) |Gamma(-t/2)|), the classical
    integral-representation constant; c_riesz(n,t) = Gamma((n-t)/2) /
    (2^t pi^(n/2) Gamma(t/2)), the classical Riesz potential constant.
    """
    if n not in (1, 2):
        raise ParameterError(f"n must be 1 or 2, got {n}")
    if not (0.0 < t < 2.0):
        raise ParameterError(f"t must lie in (0, 2) for c_lap, got {t}")
    c_lap = 2.0 ** t * Gamma((n + t) / 2.0) / (np.pi ** (n / 2.0) * abs(Gamma(-t / 2.0)))
    if not (t < n):
        raise ParameterError(f"t must lie in (0, n) for c_riesz, got t={t}, n={n}")
    c_riesz = Gamma((n - t) / 2.0) / (2.0 ** t * np.pi ** (n / 2.0) * Gamma(t / 2.0))
    return float(c_lap), float(c_riesz)


def operator_constants(n: int, t: float) -> tuple[float, float]:
    """Kernel constants actually applied by the operators D^t and D^-t.

    The convention pins the symbol |xi|^t to the transform pair (forward
    kernel e^{-ix.xi} with unit weight on the symbol side, inverse with
    1/(2pi)^n); this rescales the classical pair by (2pi)^(-n/2) and
    (2pi)^(+n/2) respectively, leaving the composition D^-t D^t = id.
    """
    c_lap, c_riesz = kernel_constants(n, t)
    scale = (2.0 * np.pi) ** (n / 2.0)
    return c_lap / scale, c_riesz * scale


def slice_kernel_constant(n: int, t: float, p: float) -> float:
    """C(n,t,p) = Integral over R of (1 + z^2)^(-(n+tp)/2) dz by adaptive
    quadrature (relative error <= 1e-10)."""
    e = n + t * p
    if not e > 1.0:
        raise ParameterError(f"need n + t*p > 1, got {e}")

    def integrand(theta):
        # z = tan(theta); (1+z^2)^(-e/2) dz = cos(theta)^(e-2) dtheta
        return np.cos(theta) ** (e - 2.0)

    val, _ = quad(integrand, -np.pi / 2.0, np.pi / 2.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


def slice_kernel_constant_closed(n: int, t: float, p: float) -> float:
    """Closed form sqrt(pi) Gamma((n-1+tp)/2) / Gamma((n+tp)/2)."""
    e = n + t * p
    if not e > 1.0:
        raise ParameterError(f"need n + t*p > 1, got {e}")
    return float(np.sqrt(np.pi) * Gamma((e - 1.0) / 2.0) / Gamma(e / 2.0))


# ---------------------------------------------------------------------------
# Complement masses of the kernel |z|^(-e): half-plane columns, strips and
# quadrants.  These close truncation tails exactly for functions supported
# inside the computational box.


class KernelTails:
    """Cached evaluator of the profile I(z) = Int_z^inf (1+w^2)^(-e/2) dw
    and the strip/corner masses built from it."""

    _cache: dict[float, "KernelTails"] = {}
    _ZMAX = 50.0

    def __init__(self, e: float):
        if not e > 2.0:
            raise ParameterError(f"2D tail machinery needs exponent e > 2, got {e}")
        self.e = float(e)
        self.full_line = float(np.sqrt(np.pi) * Gamma((e - 1.0) / 2.0) / Gamma(e / 2.0))
        u = np.linspace(0.0, np.arctan(self._ZMAX), 6000)
        z = np.tan(u)
        J = z * hyp2f1(0.5, e / 2.0, 1.5, -z * z)
        self._u = u
        self._J = J  # odd part, I(z) = C/2 - J(z)

    @classmethod
    def get(cls, e: float) -> "KernelTails":
        key = round(float(e), 12)
        if key not in cls._cache:
            cls._cache[key] = cls(key)
        return cls._cache[key]

    def profile(self, z: np.ndarray) -> np.ndarray:
        """I(z), vectorized over any real z."""
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        small = az <= self._ZMAX
        J = np.empty_like(az)
        J[small] = np.interp(np.arctan(az[small]), self._u, self._J)
        big = ~small
        if np.any(big):
            e = self.e
            zb = az[big]
            # tail of the full-line integral: asymptotic expansion in z^-2
            t0 = zb ** (1.0 - e) / (e - 1.0)
            t1 = -(e / 2.0) * zb ** (-1.0 - e) / (e + 1.0)
            t2 = (e * (e + 2.0) / 8.0) * zb ** (-3.0 - e) / (e + 3.0)
            J[big] = self.full_line / 2.0 - (t0 + t1 + t2)
        I = self.full_line / 2.0 - np.sign(z) * J
        return I

    def strip(self, c) -> np.ndarray:
        """Mass over {u in R, v > c}, c > 0."""
        c = np.asarray(c, dtype=float)
        return self.full_line * c ** (2.0 - self.e) / (self.e - 2.0)

    def corner(self, q, c, n_nodes: int = 48) -> np.ndarray:
        """Mass over {u > q, v > c}, q > 0, vectorized over (q, c)."""
        q = np.asarray(q, dtype=float)
        c = np.asarray(c, dtype=float)
        tau, w = gauss_jacobi01(n_nodes, self.e - 3.0)
        vals = self.profile(np.multiply.outer(c / q, tau))
        return q ** (2.0 - self.e) * (vals @ w)

    def column(self, tau, c) -> np.ndarray:
        """Mass over {v > c} at horizontal distance tau > 0:
        Integral_{v>c} (tau^2 + v^2)^(-e/2) dv."""
        tau = np.asarray(tau, dtype=float)
        return tau ** (1.0 - self.e) * self.profile(np.asarray(c, dtype=float) / tau)


def ray_mass_1d(e: float, r) -> np.ndarray:
    """Integral over z > r of z^(-e) dz (e > 1)."""
    r = np.asarray(r, dtype=float)
    return r ** (1.0 - e) / (e - 1.0)


def halfspace_column_constant(n: int, e: float) -> float:
    """kappa with Integral_{y_n < 0} |x - y|^(-e) dy = kappa * x_n^(n-e)."""
    if n == 1:
        return 1.0 / (e - 1.0)
    tails = KernelTails.get(e)
    return float(tails.full_line / (e - 2.0))


def box_complement_mass(e: float, x: np.ndarray, lo, hi, dim: int, halfspace: bool) -> np.ndarray:
    """Integral of |x-y|^(-e) over (R^n_+ if halfspace else R^n) minus the box,
    vectorized over points x strictly inside the box."""
    x = np.atleast_2d(np.asarray(x, dtype=float).reshape(-1, dim))
    if dim == 1:
        xi = x[:, 0]
        if np.any(xi <= lo[0]) or np.any(xi >= hi[0]):
            raise ParameterError("points must lie strictly inside the box")
        out = ray_mass_1d(e, hi[0] - xi)
        if not halfspace:
            out = out + ray_mass_1d(e, xi - lo[0])
        elif lo[0] > 1e-12:
            out = out + ray_mass_1d(e, xi - lo[0]) - ray_mass_1d(e, xi)
        return out
    qL = x[:, 0] - lo[0]
    qR = hi[0] - x[:, 0]
    cT = hi[1] - x[:, 1]
    cB = x[:, 1] - lo[1]
    if np.any(qL <= 0) or np.any(qR <= 0) or np.any(cT <= 0) or np.any(cB <= 0):
        raise ParameterError("points must lie strictly inside the box")
    t = KernelTails.get(e)
    # partition: full strip above, (full strip below), and side pieces with
    # v limited to the (clipped) vertical extent of the box
    vlow = -cB
    out = t.strip(cT) + (t.corner(qL, vlow) - t.corner(qL, cT)) \
        + (t.corner(qR, vlow) - t.corner(qR, cT))
    if not halfspace:
        out = out + t.strip(cB) + 0.0
        # pieces below the box on the sides are already counted via vlow = -cB;
        # the full lower strip adds {v < -cB}; sides between -cB and cT counted above
    return out


def tail_weight(x, s: float, grid) -> np.ndarray:
    """rho(x) = Integral over (R^n_+ \\ box) of |x-y|^(-n-2s) dy.

    ``grid`` must be a half-space grid; x must lie strictly inside its box.
    Relative error <= 1e-6 (semi-analytic radial integration).
    """
    if not grid.halfspace:
        raise ParameterError("tail weight is defined for half-space grids")
    e = grid.dim + 2.0 * s
    return box_complement_mass(e, x, grid.lo, grid.hi, grid.dim, halfspace=True)
