"""Gauss quadrature on the reference triangle and the unit edge.

Triangle rules are collapsed tensor-product Gauss-Legendre rules (Duffy
map), which keeps all weights positive at any exactness degree.  Rules are
cached and immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 50


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights; triangle points are barycentric, edge points t in [0,1]."""

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int


def _gauss01(n: int):
    # Gauss-Legendre nodes/weights mapped from [-1,1] to [0,1]
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(min_degree: int) -> QuadratureRule:
    """Rule on the reference triangle conv{(0,0),(1,0),(0,1)}, weights sum 1/2.

    Exact for all polynomials of total degree >= ``min_degree``.
    """
    if min_degree < 0:
        raise ValueError("min_degree must be >= 0")
    if min_degree > MAX_DEGREE:
        raise ValueError(f"requested degree {min_degree} above implemented maximum {MAX_DEGREE}")
    n = (min_degree + 3) // 2  # tensor rule with n points per direction is exact to 2n-2
    ga, wa = _gauss01(n)
    gb, wb = _gauss01(n)
    A, Bc = np.meshgrid(ga, gb, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    # Duffy map: x = a(1-b), y = b, Jacobian (1-b)
    x = (A * (1.0 - Bc)).ravel()
    y = Bc.ravel()
    w = (WA * WB * (1.0 - Bc)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(bary, w, 2 * n - 2)


@lru_cache(maxsize=None)
def edge_rule(min_degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0,1], weights sum 1."""
    if min_degree < 0:
        raise ValueError("min_degree must be >= 0")
    if min_degree > MAX_DEGREE:
        raise ValueError(f"requested degree {min_degree} above implemented maximum {MAX_DEGREE}")
    n = (min_degree + 2) // 2
    t, w = _gauss01(max(n, 1))
    return QuadratureRule(t, w, 2 * max(n, 1) - 1)
