"""Mapping of reference quadrature rules to mesh elements and facets."""

from __future__ import annotations

import numpy as np

from .quadrature import make_edge_quadrature, make_quadrature


def chunks(n, size):
    """Yield index arrays covering ``range(n)`` in blocks of ``size``."""
    size = max(int(size), 1)
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def to_local(mesh, elems, x):
    """Scaled local coordinates ``(x - c_T) / h_T``; ``x`` has shape (ne, ..., 2)."""
    c = mesh.centroids[elems]
    h = mesh.element_diameters[elems]
    shape = (len(elems),) + (1,) * (x.ndim - 2)
    return (x - c.reshape(shape + (2,))) / h.reshape(shape + (1,))


def element_quadrature(mesh, elems, degree):
    """Physical points (ne, nq, 2) and weights (ne, nq) on the given elements."""
    rule = make_quadrature(degree)
    p = mesh.vertices[mesh.triangles[elems]]
    r = rule.points
    x = (p[:, None, 0, :] + r[None, :, 0, None] * (p[:, None, 1, :] - p[:, None, 0, :])
         + r[None, :, 1, None] * (p[:, None, 2, :] - p[:, None, 0, :]))
    w = rule.weights[None, :] * (2.0 * mesh.areas[elems])[:, None]
    return x, w


def facet_quadrature(mesh, facets, degree):
    """Points (nf, nq, 2), physical weights (nf, nq) and parameters s (nq,).

    The parameter ``s`` runs from the lower to the higher global vertex.
    """
    rule = make_edge_quadrature(degree)
    v = mesh.vertices[mesh.facets[facets]]
    s = rule.points
    x = v[:, None, 0, :] + s[None, :, None] * (v[:, None, 1, :] - v[:, None, 0, :])
    w = rule.weights[None, :] * mesh.facet_lengths[facets][:, None]
    return x, w, s


class BoundaryQuadrature:
    """Quadrature on the three edges of each element.

    Attributes
    ----------
    x : (ne, 3, nq, 2) points, edge ``l`` opposite local vertex ``l``
    w : (ne, 3, nq) physical weights
    s : (nq,) global facet parameter
    ref_w : (nq,) weights on the unit interval
    normal : (ne, 3, 2) outward unit normals
    tangent : (ne, 3, 2) global facet tangents
    facets : (ne, 3) global facet indices
    sign : (ne, 3) +1 where the outward normal equals the global facet normal
    """

    def __init__(self, mesh, elems, degree):
        rule = make_edge_quadrature(degree)
        f = mesh.element_facets[elems]
        self.facets = f
        self.s = rule.points
        self.ref_w = rule.weights
        v = mesh.vertices[mesh.facets[f]]  # (ne, 3, 2, 2)
        self.x = v[:, :, None, 0, :] + self.s[None, None, :, None] * (
            v[:, :, None, 1, :] - v[:, :, None, 0, :])
        self.w = self.ref_w[None, None, :] * mesh.facet_lengths[f][:, :, None]
        self.sign = mesh.element_facet_signs[elems]
        self.normal = mesh.facet_normals[f] * self.sign[..., None]
        self.tangent = mesh.facet_tangents[f]

    @property
    def flat_points(self):
        ne = self.x.shape[0]
        return self.x.reshape(ne, -1, 2)


def barycentric_coefficients(mesh, elems):
    """Coefficients of the barycentric coordinates over (1, xi, eta).

    Returns an array (ne, 3, 3) where ``[:, i, :]`` expands lambda_i.
    """
    p = mesh.vertices[mesh.triangles[elems]]
    xi = to_local(mesh, elems, p)
    A = np.concatenate([np.ones(xi.shape[:2] + (1,)), xi], axis=2)  # rows: vertices
    inv = np.linalg.inv(A)  # columns: lambda_i
    return np.swapaxes(inv, 1, 2)


def lattice(k):
    """Barycentric lattice multi-indices of degree k with all entries >= 1."""
    return [(k - i - j, i, j) for i in range(1, k) for j in range(1, k - i) if k - i - j >= 1]
