"""Pressure-robust global equilibration by a hybridized mixed stress method.

Unknowns: broken trace-free stresses sigma (degree k), an RT_k velocity u
with zero boundary normal trace, tangential facet multipliers u_hat on
interior facets and a discontinuous P_k pressure p with zero mean::

    (1/nu)(sigma, tau) + b(tau, (u, u_hat)) = (grad u_h, tau)
    b(sigma, (v, v_hat)) + (div v, p)       = -(f, v)
    (div u, q)                              = -(div u_h, q)

with ``b(tau, (v, v_hat)) = sum_T (div tau, v)_T - (tau_nn, v.n)_dT
- (tau n . t_F, v_hat)_dT``.  The multipliers enforce continuity of the
normal-tangential stress component.  The stress block is diagonal in the
orthonormal trace-free basis and is eliminated element by element.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .estimate import EquilibratedFlux
from .fem.assembly import TripletAccumulator
from .fem.geometry import BoundaryQuadrature, chunks, element_quadrature
from .fem.interpolation import as_element_function
from .fem.linalg import SparseSystem, solve_linear
from .fem.spaces import DGSpace, FacetTangentialSpace, RTSpace, TraceFreeSpace

CHUNK = 1024


class MCSSpaces:
    """The four spaces of the mixed stress formulation on a mesh."""

    def __init__(self, mesh, k):
        self.mesh = mesh
        self.k = k
        self.sigma = TraceFreeSpace(mesh, k)
        self.u = RTSpace(mesh, k)
        self.uhat = FacetTangentialSpace(mesh, k)
        self.p = DGSpace(mesh, k)


def element_blocks(spaces, elems, quad_degree=None):
    """Element matrices of the coupling forms.

    Returns
    -------
    Bu : (ne, n_sigma, n_u)   b(tau_a, (v_b, 0))
    Bh : (ne, n_sigma, n_hat) b(tau_a, (0, v_hat_b))
    D : (ne, n_p, n_u)        (div v_b, q_a)
    """
    mesh, k = spaces.mesh, spaces.k
    S, U, P, H = spaces.sigma, spaces.u, spaces.p, spaces.uhat
    qd = quad_degree or 2 * k + 2
    x, w = element_quadrature(mesh, elems, qd)
    dtau = S.div(elems, x)  # (ne,nq,ns,2)
    v = U.eval(elems, x)  # (ne,nq,nu,2)
    Bu = np.einsum("eq,eqai,eqbi->eab", w, dtau, v, optimize=True)
    D = np.einsum("eq,eqa,eqb->eab", w, P.eval(elems, x)[..., 0], U.div(elems, x), optimize=True)
    bq = BoundaryQuadrature(mesh, elems, qd)
    ne, nq = len(elems), len(bq.s)
    pts = bq.flat_points
    tau = S.eval(elems, pts).reshape(ne, 3, nq, -1, 2, 2)
    vb = U.eval(elems, pts).reshape(ne, 3, nq, -1, 2)
    n, t = bq.normal, bq.tangent
    tnn = np.einsum("elqaij,eli,elj->elqa", tau, n, n, optimize=True)
    tnt = np.einsum("elqaij,eli,elj->elqa", tau, t, n, optimize=True)
    vn = np.einsum("elqbi,eli->elqb", vb, n)
    Bu -= np.einsum("elq,elqa,elqb->eab", bq.w, tnn, vn, optimize=True)
    L = H.eval_param(bq.s)  # (nq, k+1)
    Bh = -np.einsum("elq,elqa,qj->ealj", bq.w, tnt, L, optimize=True).reshape(ne, S.n_local, -1)
    return Bu, Bh, D


def _stress_rhs(spaces, sol, elems, quad_degree):
    """(grad u_h, tau_a) per element."""
    x, w = element_quadrature(spaces.mesh, elems, quad_degree)
    g = sol.velocity.grad(elems, x)
    tau = spaces.sigma.eval(elems, x)
    ne, nq = x.shape[:2]
    return np.einsum("eq,eqc,eqac->ea", w, g.reshape(ne, nq, 4), tau, optimize=True)


def _local_saddle(Bx, D, n_p):
    """Element matrix [[-Bx^T W^-1 Bx, D^T], [D, 0]] with D padded by zeros on u_hat."""
    ne, _, nx = Bx.shape
    nu_ = D.shape[2]
    A = np.zeros((ne, nx + n_p, nx + n_p))
    A[:, :nx, :nx] = -np.matmul(Bx.transpose(0, 2, 1), Bx)
    A[:, nx:, :nu_] = D
    A[:, :nu_, nx:] = D.transpose(0, 2, 1)
    return A


def solve_geq(sol, k=None, f=None, quad_degree=None):
    """Global pressure-robust equilibrated flux; returns an :class:`EquilibratedFlux`.

    The velocity block is scaled by ``1/nu`` and the discrete pressure of
    the primal solve is moved to the right-hand side, so the unknown
    pressure is ``(p - p_h) / nu`` and remains of moderate size for small
    viscosities.  Element-interior RT dofs and the non-constant pressure
    modes are condensed statically; the global system couples the facet
    unknowns with the elementwise pressure means.
    """
    mesh = sol.mesh
    k = sol.pair.order if k is None else k
    nu = sol.nu
    f = as_element_function(sol.problem.f if f is None else f)
    qf = quad_degree or sol.problem.quad_degree or 12
    sp_ = MCSSpaces(mesh, k)
    S, U, H, P = sp_.sigma, sp_.u, sp_.uhat, sp_.p
    nT = mesh.n_elements
    nU, nH = U.n_dofs, H.n_dofs
    nUF = mesh.n_facets * (k + 1)
    nFd, nI, nh, npl = 3 * (k + 1), U.n_int, H.n_local, P.n_local
    nx = nFd + nI + nh
    # local index sets: globally coupled and condensed
    gl = np.concatenate([np.arange(nFd), np.arange(nFd + nI, nx), [nx]])
    il = np.concatenate([np.arange(nFd, nFd + nI), np.arange(nx + 1, nx + npl)])
    nG = nUF + nH + nT
    gdofs = np.concatenate([U.element_dofs[:, :nFd], nUF + H.element_dofs,
                            (nUF + nH + np.arange(nT))[:, None]], axis=1)
    wsq = np.sqrt(1.0 / S.mass_diagonal())
    Kg = TripletAccumulator((nG, nG))
    rg = np.zeros(nG)
    qs = 2 * max(k, sol.velocity.space.poly_degree) + 2
    store = []
    for el in chunks(nT, CHUNK):
        Bu, Bh, D = element_blocks(sp_, el)
        Bx = np.concatenate([Bu, Bh], axis=2)  # (ne, ns, nx)
        G = _stress_rhs(sp_, sol, el, qs)
        A = _local_saddle(Bx * wsq[None, :, None], D, npl)
        b = np.zeros((len(el), nx + npl))
        b[:, :nx] = -np.einsum("eax,ea->ex", Bx * (wsq ** 2)[None, :, None], G)
        x, w = element_quadrature(mesh, el, qf)
        fv = np.einsum("eq,eqi,eqbi->eb", w, f(el, x), U.eval(el, x), optimize=True)
        x, w = element_quadrature(mesh, el, qs)
        pv = np.einsum("eq,eq,eqb->eb", w, sol.pressure(el, x), U.div(el, x), optimize=True)
        b[:, :nFd + nI] -= (fv + pv) / nu
        b[:, nx:] = -np.einsum("eq,eq,eqa->ea", w, sol.div_velocity(el, x), P.eval(el, x)[..., 0])
        AII = A[:, il][:, :, il]
        AIG = A[:, il][:, :, gl]
        AGI = A[:, gl][:, :, il]
        X = np.linalg.solve(AII, np.concatenate([AIG, b[:, il, None]], axis=2))
        Kg.add(gdofs[el], gdofs[el], A[:, gl][:, :, gl] - np.matmul(AGI, X[..., :-1]))
        np.add.at(rg, gdofs[el].ravel(), (b[:, gl] - np.matmul(AGI, X[..., -1:])[..., 0]).ravel())
        store.append((el, Bx, G, X))
    free = np.concatenate([U.free_dofs()[:nUF], H.free_dofs(), np.ones(nT, dtype=bool)])
    ix = np.flatnonzero(free)
    Kg = Kg.tocsr()
    means = np.zeros(nG)
    # the constant function is the first orthonormal basis function, scaled by sqrt|T|
    means[nUF + nH:] = np.sqrt(mesh.areas)
    C = sp.csr_matrix(means[ix][None, :])
    # constant pressures span the kernel
    zf, _ = solve_linear(SparseSystem(Kg[ix][:, ix], rg[ix], C, kernel=means[ix]),
                         context="global equilibration")
    z = np.zeros(nG)
    z[ix] = zf
    xu = np.zeros(nU)
    xh = z[nUF:nUF + nH]
    pp = np.zeros(P.n_dofs)
    coeffs = np.zeros(S.n_dofs)
    xu[:nUF] = z[:nUF]
    for el, Bx, G, X in store:
        zg = z[gdofs[el]]
        zi = X[..., -1] - np.einsum("eij,ej->ei", X[..., :-1], zg)
        loc = np.zeros((len(el), nx + npl))
        loc[:, gl] = zg
        loc[:, il] = zi
        xu[U.element_dofs[el, nFd:]] = loc[:, nFd:nFd + nI]
        pp[P.element_dofs[el]] = loc[:, nx:]
        s = nu * (wsq ** 2)[None, :] * (G - np.einsum("eax,ex->ea", Bx, loc[:, :nx]))
        coeffs[S.element_dofs[el]] = s
    p = nu * pp + P.interpolate(sol.pressure)
    return EquilibratedFlux(S, coeffs, "GEQ", extra={"u": xu, "u_hat": xh, "p": p})
