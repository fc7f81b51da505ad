"""Finite element spaces with bases built per physical element.

Every local basis is expanded in the scaled monomials of
``(x - c_T) / h_T`` up to ``poly_degree``.  Bases are obtained by inverting
the matrix of degrees of freedom applied to a spanning set of candidate
polynomials, batched over elements.  Facet degrees of freedom use the
global facet orientation (global normal, parameter from the lower to the
higher vertex), so shared degrees of freedom need no sign corrections.
"""

from __future__ import annotations

import numpy as np

from . import polynomials as poly
from .geometry import (BoundaryQuadrature, barycentric_coefficients, chunks,
                       element_quadrature, lattice, to_local)

_CACHE_BYTES = 64 * 2 ** 20


class UnsupportedSpaceError(ValueError):
    pass


class FESpace:
    """Base class.

    Attributes
    ----------
    mesh : Mesh
    kind : str
    degree : int
    ncomp : int
        Number of value components (1 scalar, 2 vector, 4 row-major matrix).
    n_local : int
    n_dofs : int
    element_dofs : ndarray (nT, n_local)
    poly_degree : int
        Degree of the monomial expansion of the local basis.
    """

    kind = "abstract"
    ncomp = 1

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = int(degree)
        self._full_coef = None

    # -- coefficients ---------------------------------------------------
    def _build_coef(self, elems):
        raise NotImplementedError

    def coef(self, elems):
        """Basis coefficients (ne, n_local, ncomp, n_monomials)."""
        if self._full_coef is not None:
            return self._full_coef[elems]
        nT = self.mesh.n_elements
        nbytes = nT * self.n_local * self.ncomp * poly.n_monomials(self.poly_degree) * 8
        if nbytes <= _CACHE_BYTES:
            full = np.concatenate([self._build_coef(c) for c in chunks(nT, 4096)]) \
                if nT else np.zeros((0, self.n_local, self.ncomp,
                                     poly.n_monomials(self.poly_degree)))
            full.setflags(write=False)
            self._full_coef = full
            return full[elems]
        return self._build_coef(np.asarray(elems))

    # -- evaluation -----------------------------------------------------
    def eval(self, elems, x):
        """Basis values at physical points ``x`` (ne, nq, 2) -> (ne, nq, nb, ncomp)."""
        elems = np.asarray(elems)
        xi = to_local(self.mesh, elems, x)
        m = poly.eval_monomials(xi[..., 0], xi[..., 1], self.poly_degree)
        C = self.coef(elems)
        ne, nb, nc, nm = C.shape
        out = np.matmul(m, C.reshape(ne, nb * nc, nm).transpose(0, 2, 1))
        return out.reshape(ne, -1, nb, nc)

    def grad(self, elems, x):
        """Physical gradients (ne, nq, nb, ncomp, 2)."""
        elems = np.asarray(elems)
        xi = to_local(self.mesh, elems, x)
        g = poly.eval_monomial_grads(xi[..., 0], xi[..., 1], self.poly_degree)
        g = g / self.mesh.element_diameters[elems][:, None, None, None]
        C = self.coef(elems)
        ne, nb, nc, nm = C.shape
        nq = g.shape[1]
        gm = g.transpose(0, 1, 3, 2).reshape(ne, nq * 2, nm)
        out = np.matmul(gm, C.reshape(ne, nb * nc, nm).transpose(0, 2, 1))
        return out.reshape(ne, nq, 2, nb, nc).transpose(0, 1, 3, 4, 2)

    def laplacian(self, elems, x):
        """Componentwise Laplacian (ne, nq, nb, ncomp)."""
        elems = np.asarray(elems)
        C = self.coef(elems)
        deg = self.poly_degree
        ne, nb, nc, _ = C.shape
        if deg < 2:
            return np.zeros((ne, x.shape[1], nb, nc))
        L = sum(poly.derivative(poly.derivative(C, deg, a), deg - 1, a) for a in (0, 1))
        xi = to_local(self.mesh, elems, x)
        m = poly.eval_monomials(xi[..., 0], xi[..., 1], deg - 2)
        out = np.einsum("ebcm,eqm->eqbc", L, m, optimize=True)
        return out / self.mesh.element_diameters[elems][:, None, None, None] ** 2

    def div(self, elems, x):
        """Divergence: (ne, nq, nb) for vectors, row-wise (ne, nq, nb, 2) for matrices."""
        g = self.grad(elems, x)
        if self.ncomp == 2:
            return g[..., 0, 0] + g[..., 1, 1]
        if self.ncomp == 4:
            return np.stack([g[..., 0, 0] + g[..., 1, 1], g[..., 2, 0] + g[..., 3, 1]], axis=-1)
        raise UnsupportedSpaceError("divergence of a scalar field")

    # -- degrees of freedom -----------------------------------------------
    def local_dofs(self, elems, fn, quad_degree=None):
        """Apply the local degrees of freedom to ``fn``.

        ``fn(elems, x)`` returns values of shape (ne, nq, *batch, ncomp)
        (the component axis is dropped for scalar spaces).  Returns an
        array (ne, *batch, n_local).
        """
        raise NotImplementedError

    def interpolate(self, fn, quad_degree=None, chunk=4096):
        """Global coefficient vector of the canonical interpolant of ``fn``."""
        out = np.zeros(self.n_dofs)
        for el in chunks(self.mesh.n_elements, chunk):
            loc = self.local_dofs(el, fn, quad_degree)
            out[self.element_dofs[el]] = loc
        return out

    def boundary_dofs(self):
        return np.zeros(0, dtype=np.int64)

    def free_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs()] = False
        return mask

    def __repr__(self):
        return f"{type(self).__name__}(degree={self.degree}, n_dofs={self.n_dofs})"


def _dual_basis(C, D):
    """Coefficients of the basis dual to the functionals D.

    C : (ne, na, ncomp, nm) candidate polynomials
    D : (ne, ndof, na) functionals applied to candidates
    """
    X = np.linalg.inv(D)
    return np.einsum("eai,eacm->eicm", X, C, optimize=True)


def _as_batched(values, scalar):
    return values[..., None] if scalar else values


# -- Lagrange ---------------------------------------------------------------

class LagrangeSpace(FESpace):
    """Continuous P_k (optionally with the cubic bubble), scalar or vector.

    Vector dofs are numbered component-major: ``comp * n_scalar + scalar_dof``.
    """

    def __init__(self, mesh, degree, vector=False, bubble=False):
        super().__init__(mesh, degree)
        if degree < 1 or degree > 6:
            raise UnsupportedSpaceError(f"Lagrange degree {degree}")
        if bubble and degree != 2:
            raise UnsupportedSpaceError("the bubble enrichment is defined for P2")
        self.bubble = bubble
        self.vector = vector
        self.ncomp = 2 if vector else 1
        self.kind = ("lagrange_vec" if vector else "lagrange") + ("_bubble" if bubble else "")
        self.poly_degree = 3 if bubble else degree
        k = degree
        nV, nF, nT = mesh.n_vertices, mesh.n_facets, mesh.n_elements
        n_int = 1 if bubble else (k - 1) * (k - 2) // 2
        self.n_scalar = nV + nF * (k - 1) + nT * n_int
        self.n_local_scalar = 3 + 3 * (k - 1) + n_int
        self._n_int = n_int
        sd = self._scalar_dofs()
        self.scalar_element_dofs = sd
        if vector:
            self.element_dofs = np.concatenate([sd, sd + self.n_scalar], axis=1)
        else:
            self.element_dofs = sd
        self.n_local = self.element_dofs.shape[1]
        self.n_dofs = self.n_scalar * self.ncomp

    def _scalar_dofs(self):
        m, k = self.mesh, self.degree
        nV, nF = m.n_vertices, m.n_facets
        parts = [m.triangles]
        if k > 1:
            ef = m.element_facets
            parts.append((nV + ef[:, :, None] * (k - 1) + np.arange(k - 1)).reshape(len(ef), -1))
        if self._n_int:
            base = nV + nF * (k - 1)
            parts.append(base + np.arange(m.n_elements)[:, None] * self._n_int
                         + np.arange(self._n_int))
        return np.concatenate(parts, axis=1).astype(np.int64)

    def nodes(self, elems):
        """Physical node coordinates (ne, n_local_scalar, 2) in local dof order."""
        m, k = self.mesh, self.degree
        p = m.vertices[m.triangles[elems]]
        out = [p]
        if k > 1:
            fv = m.vertices[m.facets[m.element_facets[elems]]]  # (ne,3,2,2)
            t = np.arange(1, k) / k
            e = fv[:, :, None, 0, :] + t[None, None, :, None] * (fv[:, :, None, 1, :] - fv[:, :, None, 0, :])
            out.append(e.reshape(len(elems), -1, 2))
        if self.bubble:
            out.append(p.mean(axis=1, keepdims=True))
        elif self._n_int:
            lam = np.array(lattice(k), dtype=float) / k  # (n_int, 3)
            out.append(np.einsum("li,eid->eld", lam, p))
        return np.concatenate(out, axis=1)

    def _scalar_coef(self, elems):
        nm = poly.n_monomials(self.poly_degree)
        ne = len(elems)
        x = self.nodes(elems)
        xi = to_local(self.mesh, elems, x)
        nmk = poly.n_monomials(self.degree)
        C = np.zeros((ne, self.n_local_scalar, 1, nm))
        C[:, np.arange(nmk), 0, np.arange(nmk)] = 1.0
        if self.bubble:
            lam = barycentric_coefficients(self.mesh, elems)
            b = poly.multiply(poly.multiply(lam[:, 0], 1, lam[:, 1], 1), 2, lam[:, 2], 1)
            C[:, -1, 0, :] = b
        m = poly.eval_monomials(xi[..., 0], xi[..., 1], self.poly_degree)  # (ne, ndof, nm)
        D = np.einsum("ejm,eacm->eja", m, C)
        return _dual_basis(C, D)[:, :, 0, :]

    def _build_coef(self, elems):
        s = self._scalar_coef(elems)
        if not self.vector:
            return s[:, :, None, :]
        ne, nbs, nm = s.shape
        out = np.zeros((ne, 2 * nbs, 2, nm))
        out[:, :nbs, 0] = s
        out[:, nbs:, 1] = s
        return out

    def local_dofs(self, elems, fn, quad_degree=None):
        elems = np.asarray(elems)
        vals = fn(elems, self.nodes(elems))  # (ne, nn, *batch, [ncomp])
        vals = _as_batched(np.asarray(vals, dtype=float), not self.vector)
        vals = np.moveaxis(vals, 1, -1)  # (ne, *batch, ncomp, nn)
        return vals.reshape(vals.shape[:-2] + (-1,))

    def boundary_dofs(self):
        m, k = self.mesh, self.degree
        verts = np.flatnonzero(m.boundary_vertex_mask)
        parts = [verts]
        if k > 1:
            bf = m.boundary_facets
            parts.append((m.n_vertices + bf[:, None] * (k - 1) + np.arange(k - 1)).ravel())
        sd = np.concatenate(parts).astype(np.int64)
        if self.vector:
            sd = np.concatenate([sd, sd + self.n_scalar])
        return np.sort(sd)


# -- discontinuous spaces ----------------------------------------------------

def _orthonormal_monomials(mesh, elems, k):
    """Per-element coefficients (ne, nb, nm) of an L2-orthonormal P_k basis."""
    nm = poly.n_monomials(k)
    x, w = element_quadrature(mesh, elems, 2 * k)
    xi = to_local(mesh, elems, x)
    m = poly.eval_monomials(xi[..., 0], xi[..., 1], k)
    M = np.einsum("eq,eqa,eqb->eab", w, m, m)
    L = np.linalg.cholesky(M)
    Linv = np.linalg.inv(L)
    return Linv.reshape(len(elems), nm, nm)


class DGSpace(FESpace):
    """Discontinuous P_k with an L2-orthonormal basis per element.

    ``degree = -1`` gives the trivial space (needed for pi_{k-2} with k <= 1).
    Vector dofs: ``comp * n_scalar + element * nb + i``.
    """

    def __init__(self, mesh, degree, vector=False):
        super().__init__(mesh, degree)
        if degree < -1:
            raise UnsupportedSpaceError(f"DG degree {degree}")
        self.vector = vector
        self.ncomp = 2 if vector else 1
        self.kind = "dg_vec" if vector else "dg"
        self.poly_degree = max(degree, 0)
        nbs = poly.n_monomials(degree) if degree >= 0 else 0
        self.n_local_scalar = nbs
        nT = mesh.n_elements
        self.n_scalar = nT * nbs
        sd = np.arange(nT * nbs, dtype=np.int64).reshape(nT, nbs)
        self.element_dofs = np.concatenate([sd, sd + self.n_scalar], axis=1) if vector else sd
        self.n_local = self.element_dofs.shape[1]
        self.n_dofs = self.n_scalar * self.ncomp

    def _build_coef(self, elems):
        nm = poly.n_monomials(self.poly_degree)
        if self.degree < 0:
            return np.zeros((len(elems), 0, self.ncomp, nm))
        s = _orthonormal_monomials(self.mesh, elems, self.degree)
        if not self.vector:
            return s[:, :, None, :]
        nbs = s.shape[1]
        out = np.zeros((len(elems), 2 * nbs, 2, nm))
        out[:, :nbs, 0] = s
        out[:, nbs:, 1] = s
        return out

    def local_dofs(self, elems, fn, quad_degree=None):
        elems = np.asarray(elems)
        if self.degree < 0:
            return np.zeros((len(elems), 0))
        qd = quad_degree if quad_degree is not None else 2 * self.degree + 4
        x, w = element_quadrature(self.mesh, elems, qd)
        vals = _as_batched(np.asarray(fn(elems, x), dtype=float), not self.vector)
        phi = self.eval(elems, x)  # (ne,nq,nb,ncomp)
        return np.einsum("eq,eq...c,eqbc->e...b", w, vals, phi, optimize=True)


class TraceFreeSpace(FESpace):
    """Broken trace-free matrices [[a, b], [c, -a]] with a, b, c in P_k.

    Values are row-major with ncomp = 4.  Local dofs are ordered
    ``component * nb + i`` for components (a, b, c), each an orthonormal
    scalar P_k basis.
    """

    kind = "tracefree"
    ncomp = 4
    # value pattern of the three scalar components
    PATTERN = np.array([[1.0, 0.0, 0.0, -1.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    WEIGHTS = np.array([2.0, 1.0, 1.0])

    def __init__(self, mesh, degree):
        super().__init__(mesh, degree)
        if degree < 0:
            raise UnsupportedSpaceError(f"trace-free degree {degree}")
        self.poly_degree = degree
        nbs = poly.n_monomials(degree)
        self.n_local_scalar = nbs
        self.n_local = 3 * nbs
        nT = mesh.n_elements
        self.element_dofs = np.arange(nT * self.n_local, dtype=np.int64).reshape(nT, self.n_local)
        self.n_dofs = nT * self.n_local

    def _build_coef(self, elems):
        s = _orthonormal_monomials(self.mesh, elems, self.degree)
        return np.einsum("pc,ebm->epbcm", self.PATTERN, s).reshape(
            len(elems), self.n_local, 4, s.shape[-1])

    def mass_diagonal(self):
        """Diagonal of the (block-diagonal, diagonal) Frobenius mass matrix."""
        return np.repeat(self.WEIGHTS, self.n_local_scalar)

    def local_dofs(self, elems, fn, quad_degree=None):
        """Frobenius L2 projection onto the trace-free space."""
        elems = np.asarray(elems)
        qd = quad_degree if quad_degree is not None else 2 * self.degree + 4
        x, w = element_quadrature(self.mesh, elems, qd)
        vals = np.asarray(fn(elems, x), dtype=float)
        phi = self.eval(elems, x)
        rhs = np.einsum("eq,eq...c,eqbc->e...b", w, vals, phi, optimize=True)
        return rhs / self.mass_diagonal()


# -- H(div) spaces --------------------------------------------------------------

class _HdivSpace(FESpace):
    """Shared machinery of RT_k and BDM_k.

    Facet dofs: mean of ``v . n_F * L_j(s)`` over the facet, j = 0..k.
    Interior dofs: mean over the element of ``v . q`` for the interior tests q.
    Numbering: ``facet * (k + 1) + j`` then ``nF * (k + 1) + element * n_int + i``.
    """

    ncomp = 2

    def _setup(self, n_int):
        m, k = self.mesh, self.degree
        nF, nT = m.n_facets, m.n_elements
        self.n_int = n_int
        fd = (m.element_facets[:, :, None] * (k + 1) + np.arange(k + 1)).reshape(nT, -1)
        idd = nF * (k + 1) + np.arange(nT)[:, None] * n_int + np.arange(n_int)
        self.element_dofs = np.concatenate([fd, idd], axis=1).astype(np.int64)
        self.n_local = self.element_dofs.shape[1]
        self.n_dofs = nF * (k + 1) + nT * n_int

    def _interior_tests(self, elems):
        """Coefficients (ne, n_int, 2, nm_t) and their monomial degree."""
        raise NotImplementedError

    def _candidates(self, elems):
        raise NotImplementedError

    def local_dofs(self, elems, fn, quad_degree=None):
        elems = np.asarray(elems)
        k = self.degree
        ne = len(elems)
        qd = quad_degree if quad_degree is not None else 2 * k + 4
        bq = BoundaryQuadrature(self.mesh, elems, qd)
        nq = len(bq.s)
        vals = np.asarray(fn(elems, bq.flat_points), dtype=float)
        vals = vals.reshape((ne, 3, nq) + vals.shape[2:])
        vn = np.einsum("elq...c,elc->elq...", vals, self.mesh.facet_normals[bq.facets])
        L = poly.legendre_on_unit(bq.s, k + 1) * bq.ref_w[:, None]  # (nq, k+1)
        fac = np.einsum("elq...,qj->e...lj", vn, L)
        fac = fac.reshape(fac.shape[:-2] + (3 * (k + 1),))
        if self.n_int == 0:
            return fac
        tests, td = self._interior_tests(elems)
        x, w = element_quadrature(self.mesh, elems, qd)
        w = w / self.mesh.areas[elems][:, None]
        ivals = np.asarray(fn(elems, x), dtype=float)
        xi = to_local(self.mesh, elems, x)
        mt = poly.eval_monomials(xi[..., 0], xi[..., 1], td)
        tv = np.einsum("eicm,eqm->eqic", tests, mt)
        inner = np.einsum("eq,eq...c,eqic->e...i", w, ivals, tv, optimize=True)
        return np.concatenate([fac, inner], axis=-1)

    def _build_coef(self, elems):
        C = self._candidates(elems)  # (ne, na, 2, nm)
        pd = self.poly_degree

        def cand(el, x):
            xi = to_local(self.mesh, el, x)
            m = poly.eval_monomials(xi[..., 0], xi[..., 1], pd)
            return np.einsum("eacm,eqm->eqac", C, m)

        D = self.local_dofs(elems, cand, quad_degree=2 * pd + 1)  # (ne, na, ndof)
        return _dual_basis(C, np.swapaxes(D, 1, 2))

    def boundary_dofs(self):
        k = self.degree
        bf = self.mesh.boundary_facets
        return np.sort((bf[:, None] * (k + 1) + np.arange(k + 1)).ravel())


def _vector_monomials(ne, k, nm):
    nk = poly.n_monomials(k)
    C = np.zeros((ne, 2 * nk, 2, nm))
    C[:, np.arange(nk), 0, np.arange(nk)] = 1.0
    C[:, nk + np.arange(nk), 1, np.arange(nk)] = 1.0
    return C


class RTSpace(_HdivSpace):
    """Raviart--Thomas RT_k: P_k^2 + x P_k (local dimension (k+1)(k+3))."""

    kind = "rt"

    def __init__(self, mesh, degree):
        super().__init__(mesh, degree)
        if degree < 0 or degree > 5:
            raise UnsupportedSpaceError(f"RT degree {degree}")
        self.poly_degree = degree + 1
        self._setup(degree * (degree + 1))

    def _candidates(self, elems):
        k = self.degree
        nm = poly.n_monomials(k + 1)
        C = _vector_monomials(len(elems), k, nm)
        idx = poly._index(k + 1)
        extra = np.zeros((len(elems), k + 1, 2, nm))
        for a, (i, j) in enumerate(poly.exponents(k)[poly.n_monomials(k - 1) if k else 0:]):
            extra[:, a, 0, idx[(i + 1, j)]] = 1.0
            extra[:, a, 1, idx[(i, j + 1)]] = 1.0
        return np.concatenate([C, extra], axis=1)

    def _interior_tests(self, elems):
        k = self.degree
        return _vector_monomials(len(elems), k - 1, poly.n_monomials(k - 1)), k - 1


class BDMSpace(_HdivSpace):
    """Brezzi--Douglas--Marini BDM_k: full P_k^2 with normal continuity.

    Interior tests: gradients of P_{k-1} and curls of b_T P_{k-2}.
    """

    kind = "bdm"

    def __init__(self, mesh, degree):
        super().__init__(mesh, degree)
        if degree < 1 or degree > 5:
            raise UnsupportedSpaceError(f"BDM degree {degree}")
        self.poly_degree = degree
        self._setup(degree * degree - 1)

    def _candidates(self, elems):
        k = self.degree
        return _vector_monomials(len(elems), k, poly.n_monomials(k))

    def _interior_tests(self, elems):
        k = self.degree
        ne = len(elems)
        nm = poly.n_monomials(k)
        tests = []
        nk1 = poly.n_monomials(k - 1)
        for a in range(1, nk1):
            c = np.zeros(nk1)
            c[a] = 1.0
            g = np.stack([poly.derivative(c, k - 1, 0), poly.derivative(c, k - 1, 1)])
            tests.append(np.broadcast_to(poly.embed(g, k - 2, k), (ne, 2, nm)))
        if k >= 2:
            lam = barycentric_coefficients(self.mesh, elems)
            b = poly.multiply(poly.multiply(lam[:, 0], 1, lam[:, 1], 1), 2, lam[:, 2], 1)
            for a in range(poly.n_monomials(k - 2)):
                q = np.zeros(poly.n_monomials(k - 2))
                q[a] = 1.0
                bq = poly.multiply(b, 3, q, k - 2)  # degree k + 1
                curl = np.stack([poly.derivative(bq, k + 1, 1), -poly.derivative(bq, k + 1, 0)], axis=1)
                tests.append(curl)
        return np.stack(tests, axis=1), k


# -- facet space ------------------------------------------------------------

class FacetTangentialSpace:
    """Scalar P_k on facets times the global tangent: v_hat = v_s(s) t_F.

    Basis: shifted Legendre polynomials in the global facet parameter.
    Dof ``facet * (k + 1) + j``.
    """

    kind = "facet_tangential"

    def __init__(self, mesh, degree):
        if degree < 0:
            raise UnsupportedSpaceError(f"facet degree {degree}")
        self.mesh = mesh
        self.degree = int(degree)
        self.n_local = 3 * (degree + 1)
        k = degree
        self.facet_dofs = (np.arange(mesh.n_facets)[:, None] * (k + 1) + np.arange(k + 1)).astype(np.int64)
        self.element_dofs = self.facet_dofs[mesh.element_facets].reshape(mesh.n_elements, -1)
        self.n_dofs = mesh.n_facets * (k + 1)

    def eval_param(self, s):
        """Scalar basis values (nq, k+1) at facet parameters ``s``."""
        return poly.legendre_on_unit(s, self.degree + 1)

    def boundary_dofs(self):
        return np.sort(self.facet_dofs[self.mesh.boundary_facets].ravel())

    def free_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs()] = False
        return mask

    def __repr__(self):
        return f"FacetTangentialSpace(degree={self.degree}, n_dofs={self.n_dofs})"


# -- functions ----------------------------------------------------------------

class FEFunction:
    """A coefficient vector on a space, evaluable per element."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.n_dofs,):
            raise ValueError(f"expected {space.n_dofs} coefficients, got {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    def _local(self, elems):
        return self.coeffs[self.space.element_dofs[elems]]

    def __call__(self, elems, x):
        v = np.einsum("eqbc,eb->eqc", self.space.eval(elems, x), self._local(elems))
        return v[..., 0] if self.space.ncomp == 1 else v

    def grad(self, elems, x):
        g = np.einsum("eqbcd,eb->eqcd", self.space.grad(elems, x), self._local(elems))
        return g[..., 0, :] if self.space.ncomp == 1 else g

    def div(self, elems, x):
        d = self.space.div(elems, x)
        return np.einsum("eqb...,eb->eq...", d, self._local(elems))


_KINDS = {
    "lagrange": lambda m, k, **kw: LagrangeSpace(m, k, vector=False, **kw),
    "lagrange_vec": lambda m, k, **kw: LagrangeSpace(m, k, vector=True, **kw),
    "lagrange_vec_bubble": lambda m, k, **kw: LagrangeSpace(m, k, vector=True, bubble=True, **kw),
    "dg": lambda m, k, **kw: DGSpace(m, k, **kw),
    "dg_vec": lambda m, k, **kw: DGSpace(m, k, vector=True, **kw),
    "rt": RTSpace,
    "bdm": BDMSpace,
    "facet_tangential": FacetTangentialSpace,
    "tracefree": TraceFreeSpace,
}


def build_space(mesh, kind, degree, **options):
    """Construct a space by name; see ``_KINDS`` for the available kinds."""
    try:
        factory = _KINDS[kind]
    except KeyError:
        raise UnsupportedSpaceError(f"unknown space kind {kind!r}") from None
    return factory(mesh, degree, **options)
