"""Canonical interpolation and elementwise projection operators."""

from __future__ import annotations

import numpy as np

from .spaces import BDMSpace, DGSpace, FEFunction, RTSpace, UnsupportedSpaceError


class ElementFunction:
    """Wraps ``fn(elems, x)`` so it is not mistaken for a plain ``fn(x)``."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, elems, x):
        return self.fn(elems, x)


def as_element_function(f):
    """Normalize ``f`` to the ``(elems, x)`` calling convention.

    Accepts :class:`FEFunction`, :class:`ElementFunction` or a plain callable
    of a point array ``x`` with trailing dimension 2.
    """
    if isinstance(f, (FEFunction, ElementFunction)):
        return f
    if not callable(f):
        raise TypeError(f"cannot evaluate {type(f).__name__}")
    return ElementFunction(lambda elems, x: f(x))


def interpolate_bdm(mesh, k, v, quad_degree=None):
    """Coefficients of the BDM_k interpolant of ``v``.

    For piecewise smooth ``v`` the facet moments are taken from each element's
    own side; continuous inputs therefore give a single-valued result.
    """
    if k < 1:
        raise UnsupportedSpaceError(f"BDM interpolation needs k >= 1, got {k}")
    space = v if isinstance(v, BDMSpace) else BDMSpace(mesh, k)
    return space, space.interpolate(as_element_function(v), quad_degree)


def interpolate_rt(mesh, k, v, quad_degree=None):
    """Coefficients of the RT_k interpolant of ``v``."""
    space = RTSpace(mesh, k)
    return space, space.interpolate(as_element_function(v), quad_degree)


def l2_project_elementwise(mesh, k, f, order_hint=None, vector=False):
    """Elementwise L2 projection onto discontinuous P_k.

    Returns ``(space, coefficients)``; for ``k < 0`` the space is trivial and
    the projection is the zero function.
    """
    space = DGSpace(mesh, k, vector=vector)
    if k < 0:
        return space, np.zeros(0)
    qd = order_hint if order_hint is not None else 2 * k + 4
    return space, space.interpolate(as_element_function(f), qd)
