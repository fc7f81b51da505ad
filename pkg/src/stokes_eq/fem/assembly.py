"""Global assembly from batched element contributions."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .geometry import BoundaryQuadrature, chunks, element_quadrature

DEFAULT_CHUNK = 2048


def scatter_matrix(rows, cols, local, shape):
    """Sum local blocks (ne, nr, nc) into a CSR matrix of ``shape``."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    local = np.asarray(local, dtype=float)
    if local.shape != rows.shape + cols.shape[1:]:
        raise ValueError(f"local block shape {local.shape} does not match dofs "
                         f"{rows.shape} x {cols.shape}")
    I = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    J = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    A = sp.coo_matrix((local.ravel(), (I, J)), shape=shape)
    return A.tocsr()


class TripletAccumulator:
    """Collects local blocks and builds one sparse matrix at the end."""

    def __init__(self, shape):
        self.shape = shape
        self._I, self._J, self._V = [], [], []

    def add(self, rows, cols, local):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        local = np.asarray(local, dtype=float)
        if local.shape != rows.shape + cols.shape[1:]:
            raise ValueError(f"local block shape {local.shape} does not match dofs "
                             f"{rows.shape} x {cols.shape}")
        self._I.append(np.broadcast_to(rows[:, :, None], local.shape).ravel())
        self._J.append(np.broadcast_to(cols[:, None, :], local.shape).ravel())
        self._V.append(local.ravel())

    def tocsr(self):
        if not self._V:
            return sp.csr_matrix(self.shape)
        A = sp.coo_matrix((np.concatenate(self._V),
                           (np.concatenate(self._I), np.concatenate(self._J))), shape=self.shape)
        return A.tocsr()


def scatter_vector(dofs, local, n):
    out = np.zeros(n)
    np.add.at(out, np.asarray(dofs).ravel(), np.asarray(local, dtype=float).ravel())
    return out


class ElementContext:
    """Quadrature data handed to element kernels."""

    def __init__(self, mesh, elems, degree):
        self.mesh = mesh
        self.elems = elems
        self.x, self.w = element_quadrature(mesh, elems, degree)


def assemble(row_space, col_space, element_kernel=None, facet_kernel=None,
             quad_degree=4, chunk=DEFAULT_CHUNK):
    """Assemble a bilinear form given as element and element-boundary kernels.

    ``element_kernel(ctx)`` receives an :class:`ElementContext`;
    ``facet_kernel(mesh, elems, bq)`` a :class:`BoundaryQuadrature` for the
    edges of the chunk's elements.  Both return local matrices
    (ne, row_space.n_local, col_space.n_local).
    """
    mesh = row_space.mesh
    if col_space.mesh is not mesh:
        raise ValueError("spaces live on different meshes")
    shape = (row_space.n_dofs, col_space.n_dofs)
    total = TripletAccumulator(shape)
    for el in chunks(mesh.n_elements, chunk):
        local = np.zeros((len(el), row_space.n_local, col_space.n_local))
        if element_kernel is not None:
            local += element_kernel(ElementContext(mesh, el, quad_degree))
        if facet_kernel is not None:
            local += facet_kernel(mesh, el, BoundaryQuadrature(mesh, el, quad_degree))
        total.add(row_space.element_dofs[el], col_space.element_dofs[el], local)
    return total.tocsr()


def mass_matrix(space, quad_degree=None):
    qd = 2 * space.poly_degree if quad_degree is None else quad_degree

    def kernel(ctx):
        phi = space.eval(ctx.elems, ctx.x)
        return np.einsum("eq,eqac,eqbc->eab", ctx.w, phi, phi, optimize=True)

    return assemble(space, space, kernel, quad_degree=qd)


def stiffness_matrix(space, quad_degree=None):
    """(grad u, grad v) summed over components."""
    qd = 2 * max(space.poly_degree - 1, 0) if quad_degree is None else quad_degree

    def kernel(ctx):
        g = space.grad(ctx.elems, ctx.x)
        return np.einsum("eq,eqacd,eqbcd->eab", ctx.w, g, g, optimize=True)

    return assemble(space, space, kernel, quad_degree=qd)


def load_vector(space, fn, quad_degree=None, chunk=DEFAULT_CHUNK):
    """(f, phi_i) for an element function ``fn(elems, x)`` of the space's value shape."""
    qd = space.poly_degree + 4 if quad_degree is None else quad_degree
    out = np.zeros(space.n_dofs)
    for el in chunks(space.mesh.n_elements, chunk):
        x, w = element_quadrature(space.mesh, el, qd)
        vals = np.asarray(fn(el, x), dtype=float)
        if space.ncomp == 1 and vals.ndim == 2:
            vals = vals[..., None]
        phi = space.eval(el, x)
        local = np.einsum("eq,eqc,eqbc->eb", w, vals, phi, optimize=True)
        np.add.at(out, space.element_dofs[el].ravel(), local.ravel())
    return out
