"""Quadrature rules on the reference triangle and the reference edge.

The reference triangle has vertices (0, 0), (1, 0), (0, 1); the reference
edge is the unit interval.  Rules of degree <= 2 are the classical symmetric
ones, higher degrees use a collapsed Gauss--Jacobi product rule, which has
positive weights and interior points for every degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 25


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights of a quadrature rule.

    ``points`` are reference coordinates, shape ``(nq, 2)`` on the triangle
    and ``(nq,)`` on the edge.  ``weights`` sum to the reference measure.
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def barycentric(self) -> np.ndarray:
        """Barycentric coordinates ``(nq, 3)`` of triangle points."""
        p = np.atleast_2d(self.points)
        return np.column_stack([1.0 - p[:, 0] - p[:, 1], p[:, 0], p[:, 1]])

    def __len__(self):
        return len(self.weights)


def _freeze(rule):
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


@lru_cache(maxsize=None)
def make_quadrature(degree: int) -> QuadratureRule:
    """Return a triangle rule integrating polynomials of ``degree`` exactly."""
    degree = int(degree)
    if degree < 0:
        raise UnsupportedDegreeError(f"negative quadrature degree {degree}")
    if degree > MAX_DEGREE:
        raise UnsupportedDegreeError(
            f"quadrature degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )
    if degree <= 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        return _freeze(QuadratureRule(pts, np.array([0.5]), 1))
    if degree == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return _freeze(QuadratureRule(pts, np.full(3, 1 / 6), 2))
    # collapsed (Duffy) rule: x = s, y = (1 - s) t with Jacobi weight (1-s)
    n = degree // 2 + 1
    s, ws = roots_jacobi(n, 1.0, 0.0)
    t, wt = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    ws = ws / 4.0
    t = 0.5 * (t + 1.0)
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([S.ravel(), ((1.0 - S) * T).ravel()])
    return _freeze(QuadratureRule(pts, W.ravel(), 2 * n - 1))


@lru_cache(maxsize=None)
def make_edge_quadrature(degree: int) -> QuadratureRule:
    """Gauss--Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    degree = int(degree)
    if degree < 0 or degree > 2 * MAX_DEGREE:
        raise UnsupportedDegreeError(f"edge quadrature degree {degree}")
    n = max(1, degree // 2 + 1)
    x, w = np.polynomial.legendre.leggauss(n)
    return _freeze(QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * n - 1))


def reference_monomial_integral(i: int, j: int) -> float:
    """Exact integral of x^i y^j over the reference triangle, i! j! / (i+j+2)!."""
    from math import factorial

    return factorial(i) * factorial(j) / factorial(i + j + 2)
