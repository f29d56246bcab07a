"""Gauss rule caches used throughout the quadrature code."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=64)
def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=64)
def gauss_jacobi01(n: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight t^beta (beta > -1).

    Integrates t^beta * P(t) exactly for polynomials P up to degree 2n-1.
    """
    x, w = roots_jacobi(n, 0.0, beta)
    return (x + 1.0) / 2.0, w * 2.0 ** (-beta - 1.0)


def gauss_on(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss01(n)
    return a + (b - a) * x, w * (b - a)
