"""Pressure-robust local equilibration on vertex patches.

For every vertex V a hybridized mixed problem on the patch is solved::

    (sigma^V, tau) + b(tau, (u, u_hat))  = 0
    b(sigma^V, (v, v_hat)) + (div v, p) = r^V(v, v_hat)
    (div u, q)                          = 0

with broken trace-free P_k stresses, RT_k velocities with free normal
dofs on the patch boundary, tangential facet multipliers and DG P_k
pressures.  Facet unknowns on the domain boundary (normal RT dofs and
multipliers) are removed, as in the global problem.  ``b`` is the
element form of the global solver.  The residual tests the primal solution against the bubble projection
``B^V v = I_k(phi_V v)`` (componentwise nodal interpolation)::

    r^V(v, v_hat) = sum_T (f, B^V v)_T - (sigma_bar, grad B^V v)_T
                    + (p_bar, div B^V v)_T
                    + ((sigma_bar)_nt, (B^V v - phi_V v_hat)_t)_dT

For interior vertices the velocity pair lives modulo vector constants,
imposed by two bordered rows; vertices on the boundary need no
constraint since the boundary facet unknowns are absent.  The flux is
``dev(sigma_bar) - sum_V sigma^V``.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .estimate import EquilibratedFlux, tracefree_coefficients
from .fem.geometry import BoundaryQuadrature, barycentric_coefficients, chunks, element_quadrature, to_local
from .fem.interpolation import as_element_function
from .fem.linalg import SingularSystemError
from .fem.spaces import DGSpace, LagrangeSpace
from .global_eq import MCSSpaces, element_blocks
from .mesh import InvalidArgumentError, vertex_patch

CHUNK = 1024
RESIDUAL_TOL = 1e-9


def max_threads():
    """Worker cap: ``STOKES_EQ_THREADS`` if set, else the CPU count."""
    env = os.environ.get("STOKES_EQ_THREADS")
    if env is None or env.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise ValueError(f"STOKES_EQ_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise ValueError(f"STOKES_EQ_THREADS must be a positive integer, got {env!r}")
    return n


# -- bubble projection ----------------------------------------------------------

def _local_vertex(mesh, elem, vertex):
    hit = np.flatnonzero(mesh.triangles[elem] == vertex)
    if hit.size == 0:
        raise InvalidArgumentError(f"vertex {vertex} is not a vertex of element {elem}")
    return int(hit[0])


def hat_values(mesh, elems, x):
    """Barycentric coordinates (ne, nq, 3) at points ``x`` (ne, nq, 2)."""
    lam = barycentric_coefficients(mesh, elems)
    xi = to_local(mesh, elems, x)
    return (lam[:, None, :, 0] + lam[:, None, :, 1] * xi[..., 0, None]
            + lam[:, None, :, 2] * xi[..., 1, None])


class PatchPolynomial:
    """Elementwise P_k field given by values at the Lagrange nodes.

    Parameters
    ----------
    mesh : Mesh
    elems : ndarray
        Elements carrying the field.
    k : int
    values : ndarray
        (m, n_nodes) for scalar or (m, n_nodes, 2) for vector fields, in
        the local node order of :class:`LagrangeSpace`.
    """

    def __init__(self, mesh, elems, k, values):
        self.mesh = mesh
        self.elems = np.asarray(elems)
        self.k = k
        self.values = np.asarray(values, dtype=float)
        self.vector = self.values.ndim == 3
        self._space = LagrangeSpace(mesh, k)

    def _rows(self, elems):
        elems = np.asarray(elems)
        order = np.argsort(self.elems)
        pos = np.searchsorted(self.elems, elems, sorter=order)
        rows = order[np.minimum(pos, len(order) - 1)]
        if not np.all(self.elems[rows] == elems):
            raise InvalidArgumentError("element outside the support of the field")
        return rows

    def __call__(self, elems, x):
        phi = self._space.eval(elems, x)[..., 0]  # (ne, nq, nn)
        vals = self.values[self._rows(elems)]
        if self.vector:
            return np.einsum("eqa,eac->eqc", phi, vals)
        return np.einsum("eqa,ea->eq", phi, vals)


def bubble_project_scalar(mesh, elem, vertex, v, k):
    """Nodal P_k interpolation of ``phi_V v`` on one element.

    Parameters
    ----------
    mesh : Mesh
    elem : int
    vertex : int
        A vertex of ``elem``.
    v : callable
        Scalar function of points (n, 2).
    k : int

    Returns
    -------
    PatchPolynomial
        Supported on ``elem`` only.
    """
    i = _local_vertex(mesh, elem, vertex)
    el = np.array([elem])
    nodes = LagrangeSpace(mesh, k).nodes(el)
    phi = hat_values(mesh, el, nodes)[0, :, i]
    vals = phi * np.asarray(v(nodes[0]), dtype=float)
    return PatchPolynomial(mesh, el, k, vals[None, :])


def bubble_project_vector(mesh, patch, v, k):
    """Componentwise bubble projection of an element function on a patch.

    ``v(elems, x)`` returns (ne, nq, 2).  The result vanishes on the patch
    boundary and is normal-continuous whenever ``v`` is.
    """
    el = patch.elements
    nodes = LagrangeSpace(mesh, k).nodes(el)
    i = np.array([_local_vertex(mesh, e, patch.vertex) for e in el])
    phi = hat_values(mesh, el, nodes)[np.arange(len(el)), :, i]
    vals = phi[..., None] * np.asarray(v(el, nodes), dtype=float)
    return PatchPolynomial(mesh, el, k, vals)


# -- element data shared by all patches -------------------------------------------

class LocalData:
    """Element matrices and residual blocks for a set of elements.

    Attributes
    ----------
    Bx : (ne, n_sigma, n_x)   coupling form, x = (RT local, u_hat local)
    D : (ne, n_p, n_rt)       (div v, q)
    rv : (ne, 3, n_rt)        residual on RT basis functions for each local vertex
    rh : (ne, 3, 3 (k+1))     residual on facet multipliers for each local vertex
    vint : (ne, n_rt, 2)      element integrals of the RT basis
    nt_mass : (ne, n_sigma, n_sigma)  boundary mass of the nt-traces
    """

    def __init__(self, sol, f, k, elems=None, form="ibp"):
        mesh = sol.mesh
        self.mesh = mesh
        self.k = k
        self.spaces = MCSSpaces(mesh, k)
        S, U, H, P = self.spaces.sigma, self.spaces.u, self.spaces.uhat, self.spaces.p
        self.elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
        self.row = np.full(mesh.n_elements, -1, dtype=np.int64)
        self.row[self.elems] = np.arange(len(self.elems))
        self.winv = 1.0 / S.mass_diagonal()
        f = as_element_function(sol.problem.f if f is None else f)
        qf = sol.quad_degree or sol.problem.quad_degree or 2 * sol.pair.order + 4
        kv = sol.velocity.space.poly_degree
        qs = 2 * max(k, kv) + 2
        L = LagrangeSpace(mesh, k, vector=True)
        ne = len(self.elems)
        nrt, nh = U.n_local, H.n_local
        self.Bx = np.zeros((ne, S.n_local, nrt + nh))
        self.D = np.zeros((ne, P.n_local, nrt))
        self.rv = np.zeros((ne, 3, nrt))
        self.rh = np.zeros((ne, 3, nh))
        self.vint = np.zeros((ne, nrt, 2))
        self.nt_mass = np.zeros((ne, S.n_local, S.n_local))
        for c in chunks(ne, CHUNK):
            el = self.elems[c]
            Bu, Bh, D = element_blocks(self.spaces, el)
            self.Bx[c] = np.concatenate([Bu, Bh], axis=2)
            self.D[c] = D
            if form == "ibp":
                R = _lagrange_residual_ibp(sol, f, L, el, qf, qs)
            else:
                R = _lagrange_residual_direct(sol, f, L, el, qf, qs)
            nodes = L.nodes(el)
            lam = hat_values(mesh, el, nodes)  # (ne, nn, 3)
            vn = U.eval(el, nodes)  # (ne, nn, nrt, 2)
            Rr = R.reshape(len(el), 2, -1)  # component-major
            self.rv[c] = np.einsum("eca,eai,eabc->eib", Rr, lam, vn, optimize=True)
            self.rh[c] = _multiplier_residual(sol, H, el, qs)
            x, w = element_quadrature(mesh, el, k + 1)
            self.vint[c] = np.einsum("eq,eqbc->ebc", w, U.eval(el, x))
            self.nt_mass[c] = _nt_mass(S, el, qs)


def _lagrange_residual_ibp(sol, f, L, el, qf, qs):
    """(f, psi) - (sigma_bar, grad psi) + (p_bar, div psi) + ((sigma_bar)_nt, psi_t)_dT."""
    mesh = sol.mesh
    x, w = element_quadrature(mesh, el, qf)
    R = np.einsum("eq,eqc,eqbc->eb", w, f(el, x), L.eval(el, x), optimize=True)
    x, w = element_quadrature(mesh, el, qs)
    R -= np.einsum("eq,eqij,eqbij->eb", w, sol.sigma(el, x), L.grad(el, x), optimize=True)
    R += np.einsum("eq,eq,eqb->eb", w, sol.pressure(el, x), L.div(el, x), optimize=True)
    bq = BoundaryQuadrature(mesh, el, qs)
    ne, nq = len(el), len(bq.s)
    pts = bq.flat_points
    sig = sol.sigma(el, pts).reshape(ne, 3, nq, 2, 2)
    snt = np.einsum("elqij,eli,elj->elq", sig, bq.tangent, bq.normal)
    psi = L.eval(el, pts).reshape(ne, 3, nq, -1, 2)
    pt = np.einsum("elqbi,eli->elqb", psi, bq.tangent)
    R += np.einsum("elq,elq,elqb->eb", bq.w, snt, pt, optimize=True)
    return R


def _fe_laplacian(fun, el, x):
    sp_ = fun.space
    return np.einsum("eqbc,eb->eqc", sp_.laplacian(el, x), fun.coeffs[sp_.element_dofs[el]])


def _lagrange_residual_direct(sol, f, L, el, qf, qs):
    """(f + nu lap u_bar - grad p_bar, psi) - ((sigma_bar - p_bar I)_nn, psi_n)_dT."""
    mesh = sol.mesh
    x, w = element_quadrature(mesh, el, qf)
    R = np.einsum("eq,eqc,eqbc->eb", w, f(el, x), L.eval(el, x), optimize=True)
    x, w = element_quadrature(mesh, el, qs)
    g = sol.nu * _fe_laplacian(sol.velocity, el, x) - sol.pressure.grad(el, x).reshape(x.shape)
    R += np.einsum("eq,eqc,eqbc->eb", w, g, L.eval(el, x), optimize=True)
    bq = BoundaryQuadrature(mesh, el, qs)
    ne, nq = len(el), len(bq.s)
    pts = bq.flat_points
    sig = sol.sigma(el, pts).reshape(ne, 3, nq, 2, 2)
    snn = np.einsum("elqij,eli,elj->elq", sig, bq.normal, bq.normal)
    snn = snn - sol.pressure(el, pts).reshape(ne, 3, nq)
    psi = L.eval(el, pts).reshape(ne, 3, nq, -1, 2)
    pn = np.einsum("elqbi,eli->elqb", psi, bq.normal)
    R -= np.einsum("elq,elq,elqb->eb", bq.w, snn, pn, optimize=True)
    return R


def _multiplier_residual(sol, H, el, qs):
    """-(phi_i (sigma_bar)_nt, L_j)_F for each local vertex i, facet l and degree j."""
    mesh = sol.mesh
    bq = BoundaryQuadrature(mesh, el, qs)
    ne, nq = len(el), len(bq.s)
    pts = bq.flat_points
    sig = sol.sigma(el, pts).reshape(ne, 3, nq, 2, 2)
    snt = np.einsum("elqij,eli,elj->elq", sig, bq.tangent, bq.normal)
    lam = hat_values(mesh, el, pts).reshape(ne, 3, nq, 3)
    Lj = H.eval_param(bq.s)
    out = -np.einsum("elq,elq,elqi,qj->eilj", bq.w, snt, lam, Lj, optimize=True)
    return out.reshape(ne, 3, -1)


def _nt_mass(S, el, qs):
    mesh = S.mesh
    bq = BoundaryQuadrature(mesh, el, qs)
    ne, nq = len(el), len(bq.s)
    tau = S.eval(el, bq.flat_points).reshape(ne, 3, nq, -1, 2, 2)
    tnt = np.einsum("elqaij,eli,elj->elqa", tau, bq.tangent, bq.normal, optimize=True)
    return np.einsum("elq,elqa,elqb->eab", bq.w, tnt, tnt, optimize=True)


# -- patch problems ------------------------------------------------------------

@dataclass
class PatchLayout:
    """Numbering of the unknowns of one patch problem.

    ``rt`` (m, n_rt), ``hat`` (m, n_hat) and ``p`` (m, n_p) map element
    local dofs to patch rows; dofs removed on the domain boundary point to
    the dummy row ``size``.  The last ``n_constraints`` rows carry the quotient
    constraints.
    """

    patch: object
    rows: np.ndarray
    local_vertex: np.ndarray
    facets: np.ndarray
    hat_facets: np.ndarray
    rt: np.ndarray
    hat: np.ndarray
    p: np.ndarray
    n_rt: int
    n_hat: int
    n_p: int
    n_constraints: int

    @property
    def size(self):
        return self.n_rt + self.n_hat + self.n_p + self.n_constraints

    @property
    def x(self):
        return np.concatenate([self.rt, self.hat], axis=1)


def patch_layout(data, patch):
    mesh, k = data.mesh, data.k
    U, P = data.spaces.u, data.spaces.p
    el = patch.elements
    m = len(el)
    rows = data.row[el]
    if np.any(rows < 0):
        raise InvalidArgumentError(f"patch of vertex {patch.vertex} leaves the prepared elements")
    kp = k + 1
    fac = np.asarray(patch.facets)
    fpos = np.searchsorted(fac, mesh.element_facets[el])
    keep = np.ones(len(fac), dtype=bool)
    if patch.is_boundary_vertex:
        keep &= ~mesh.boundary_facet_mask[fac]
    hpos = np.cumsum(keep) - 1
    nkf = int(keep.sum())
    n_rt = nkf * kp + m * U.n_int
    n_hat = nkf * kp
    n_p = m * P.n_local
    nc = 0 if patch.is_boundary_vertex else 2
    size = n_rt + n_hat + n_p + nc
    hp = hpos[fpos]
    rtf = np.where(keep[fpos][:, :, None], hp[:, :, None] * kp + np.arange(kp), size)
    rt = np.concatenate([rtf.reshape(m, -1),
                         nkf * kp + np.arange(m)[:, None] * U.n_int + np.arange(U.n_int)],
                        axis=1)
    hat = np.where(keep[fpos][:, :, None], n_rt + hp[:, :, None] * kp + np.arange(kp), size)
    hat = hat.reshape(m, -1)
    p = n_rt + n_hat + np.arange(m)[:, None] * P.n_local + np.arange(P.n_local)
    lv = np.argmax(mesh.triangles[el] == patch.vertex, axis=1)
    return PatchLayout(patch, rows, lv, fac, fac[keep], rt, hat, p, n_rt, n_hat, n_p, nc)


def _patch_matrix(data, lay):
    mesh = data.mesh
    N = lay.size
    A = np.zeros((N + 1, N + 1))
    Bx = data.Bx[lay.rows]
    WB = Bx * data.winv[None, :, None]
    xi = lay.x
    np.add.at(A, (xi[:, :, None], xi[:, None, :]), -np.matmul(Bx.transpose(0, 2, 1), WB))
    D = data.D[lay.rows]
    np.add.at(A, (lay.p[:, :, None], lay.rt[:, None, :]), D)
    np.add.at(A, (lay.rt[:, :, None], lay.p[:, None, :]), D.transpose(0, 2, 1))
    if lay.n_constraints:
        Pi = _quotient_rows(data, lay)
        c0 = N - 2
        A[c0:N, :N] += Pi
        A[:N, c0:N] += Pi.T
    return A[:N, :N]


def _quotient_rows(data, lay):
    """Rows (2, size) of int_omega v + sum_F int_F v_hat for the patch unknowns."""
    mesh, k = data.mesh, data.k
    N = lay.size
    Pi = np.zeros((2, N + 1))
    for c in range(2):
        np.add.at(Pi[c], lay.rt.ravel(), data.vint[lay.rows][:, :, c].ravel())
    kp = k + 1
    hf = lay.hat_facets
    idx = lay.n_rt + np.arange(len(hf)) * kp  # the constant Legendre mode
    Pi[:, idx] += (mesh.facet_lengths[hf][:, None] * mesh.facet_tangents[hf]).T
    return Pi[:, :N]


def _patch_rhs(data, lay):
    N = lay.size
    b = np.zeros(N + 1)
    r = np.arange(len(lay.rows))
    np.add.at(b, lay.rt.ravel(), data.rv[lay.rows, lay.local_vertex].ravel())
    np.add.at(b, lay.hat.ravel(), data.rh[lay.rows, lay.local_vertex].ravel())
    del r
    return b[:N]


def constant_pair(data, lay, c):
    """Patch coefficients of the constant pair (c, c_t)."""
    mesh, k = data.mesh, data.k
    U = data.spaces.u
    el = lay.patch.elements
    N = lay.size
    z = np.zeros(N + 1)
    cd = U.local_dofs(el, lambda e, x: np.broadcast_to(np.asarray(c, float), x.shape))
    z[lay.rt.ravel()] = cd.ravel()
    hf = lay.hat_facets
    z[lay.n_rt + np.arange(len(hf)) * (k + 1)] = mesh.facet_tangents[hf] @ np.asarray(c, float)
    return z[:N]


@dataclass
class LocalSolution:
    """Solution of one patch problem.

    Attributes
    ----------
    vertex : int
    elements : ndarray
    sigma : (m, n_sigma) trace-free stress coefficients per element
    u, u_hat, p : patch coefficient vectors
    multipliers : (2,) or (0,) quotient multipliers
    residual : float
        Relative residual of the dense solve.
    """

    vertex: int
    elements: np.ndarray
    sigma: np.ndarray
    u: np.ndarray
    u_hat: np.ndarray
    p: np.ndarray
    multipliers: np.ndarray
    residual: float
    layout: PatchLayout = field(repr=False, default=None)


def assemble_local_residual(patch, sol, f=None, k=None, form="ibp", data=None):
    """Residual functional of a patch on its (RT, facet multiplier) unknowns.

    ``form="ibp"`` uses the integrated-by-parts representation,
    ``form="direct"`` the one with the strong element residual and the
    normal-normal jumps.  Returns ``(r_u, r_hat, layout)``.
    """
    k = sol.pair.order if k is None else k
    if data is None:
        data = LocalData(sol, f, k, patch.elements, form=form)
    lay = patch_layout(data, patch)
    b = _patch_rhs(data, lay)
    return b[:lay.n_rt], b[lay.n_rt:lay.n_rt + lay.n_hat], lay


def solve_local_patch(patch, sol, f=None, k=None, data=None):
    """Solve the patch problem of one vertex; returns a :class:`LocalSolution`."""
    k = sol.pair.order if k is None else k
    if data is None:
        data = LocalData(sol, f, k, patch.elements)
    lay = patch_layout(data, patch)
    A = _patch_matrix(data, lay)
    b = _patch_rhs(data, lay)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            z = sla.solve(A, b, assume_a="sym", check_finite=False)
    except (sla.LinAlgError, sla.LinAlgWarning) as exc:
        raise SingularSystemError(f"singular patch problem at vertex {patch.vertex}: {exc}") from None
    scale = max(np.linalg.norm(b), np.abs(A).max() * np.linalg.norm(z))
    res = np.linalg.norm(A @ z - b) / scale if scale > 0 else 0.0
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise SingularSystemError(f"patch problem at vertex {patch.vertex}: residual {res:.3e}")
    zx = np.append(z, 0.0)[lay.x]
    Bx = data.Bx[lay.rows]
    sigma = -data.winv[None, :] * np.einsum("eax,ex->ea", Bx, zx)
    n0 = lay.n_rt + lay.n_hat
    return LocalSolution(patch.vertex, patch.elements, sigma, z[:lay.n_rt], z[lay.n_rt:n0],
                         z[n0:n0 + lay.n_p], z[n0 + lay.n_p:], float(res), lay)


def patch_norm_squared(data, local):
    """||sigma^V||^2 = sum_T ||sigma^V||_T^2 + h_T ||(sigma^V)_nt||_dT^2."""
    s = local.sigma
    rows = data.row[local.elements]
    w = data.spaces.sigma.mass_diagonal()
    h = data.mesh.element_diameters[local.elements]
    vol = np.einsum("ea,a,ea->", s, w, s)
    bnd = np.einsum("ea,eab,eb->e", s, data.nt_mass[rows], s)
    return float(vol + np.sum(h * bnd))


def _solve_vertex(args):
    data, sol, v = args
    patch = vertex_patch(data.mesh, v)
    loc = solve_local_patch(patch, sol, data=data)
    return loc.elements, loc.sigma, patch_norm_squared(data, loc)


def assemble_leq_flux(sol, f=None, k=None, threads=None):
    """Locally equilibrated flux ``dev(sigma_bar) - sum_V sigma^V``.

    Patch problems run on up to ``threads`` workers (default
    :func:`max_threads`); contributions are accumulated in vertex order.
    ``extra["patch_norms"]`` holds ``||sigma^V||^2`` per vertex.
    """
    mesh = sol.mesh
    k = sol.pair.order if k is None else k
    data = LocalData(sol, f, k)
    S = data.spaces.sigma
    threads = max_threads() if threads is None else int(threads)
    delta = np.zeros((mesh.n_elements, S.n_local))
    norms = np.zeros(mesh.n_vertices)
    jobs = [(data, sol, v) for v in range(mesh.n_vertices)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(_solve_vertex, jobs, chunksize=16)
            results = list(results)
    else:
        results = map(_solve_vertex, jobs)
    for v, (el, sig, nrm) in enumerate(results):
        delta[el] += sig
        norms[v] = nrm
    _, coeffs = tracefree_coefficients(mesh, k, lambda e, x: sol.sigma(e, x))
    coeffs = coeffs.copy()
    coeffs[S.element_dofs] -= delta
    return EquilibratedFlux(S, coeffs, "LEQ", extra={"patch_norms": norms})


def local_efficiency_ratio(flux, sol, grad_u, laplace_u=None, quad_degree=12):
    """``sum_V ||sigma^V||^2`` over the local efficiency bound.

    The bound is ``sum_T ||sigma - sigma_bar||_T^2 + h_T ||(sigma -
    sigma_bar)_nt||_dT^2 (+ h_T^2 ||(1 - pi_{r-2}) nu lap u||_T^2 when the
    pair uses a reconstruction and ``laplace_u`` is given)`` with
    ``sigma = nu grad u``.
    """
    mesh = sol.mesh
    nu = sol.nu
    num = float(np.sum(flux.extra["patch_norms"]))
    den = 0.0
    h = mesh.element_diameters
    r = sol.pair.order
    Pr = DGSpace(mesh, r - 2) if r >= 2 else None
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, quad_degree)
        d = nu * grad_u(x) - sol.sigma(el, x)
        den += float(np.einsum("eq,eqij,eqij->", w, d, d))
        bq = BoundaryQuadrature(mesh, el, quad_degree)
        ne, nq = len(el), len(bq.s)
        pts = bq.flat_points
        db = (nu * grad_u(pts) - sol.sigma(el, pts)).reshape(ne, 3, nq, 2, 2)
        dnt = np.einsum("elqij,eli,elj->elq", db, bq.tangent, bq.normal)
        den += float(np.sum(h[el] * np.einsum("elq,elq->e", bq.w, dnt * dnt)))
        if laplace_u is not None and sol.pair.reconstruction is not None:
            g = nu * laplace_u(x)
            if Pr is not None:
                phi = Pr.eval(el, x)[..., 0]
                c = np.einsum("eq,eqc,eqb->ebc", w, g, phi)
                g = g - np.einsum("ebc,eqb->eqc", c, phi)
            den += float(np.sum(h[el] ** 2 * np.einsum("eq,eqc,eqc->e", w, g, g)))
    return num / den if den > 0 else np.inf


def patch_boundary_nt(data, local, quad_degree=None):
    """Largest ``||(sigma^V)_nt||_F`` over facets of the patch boundary.

    Facets on the domain boundary are skipped for boundary vertices, whose
    multipliers there are removed.  The value is absolute; patches whose
    residual vanishes carry round-off only, so callers compare against a
    scale taken over all patches.
    """
    mesh = data.mesh
    S = data.spaces.sigma
    el = local.elements
    qd = quad_degree or 2 * data.k + 2
    bq = BoundaryQuadrature(mesh, el, qd)
    ne, nq = len(el), len(bq.s)
    tau = S.eval(el, bq.flat_points).reshape(ne, 3, nq, -1, 2, 2)
    vals = np.einsum("elqaij,ea->elqij", tau, local.sigma)
    snt = np.einsum("elqij,eli,elj->elq", vals, bq.tangent, bq.normal)
    # edge l is opposite local vertex l, so the patch boundary edge is opposite V
    outer = mesh.triangles[el] == local.vertex
    on_dom = mesh.boundary_facet_mask[mesh.element_facets[el]]
    sel = outer & ~(on_dom & bool(mesh.boundary_vertex_mask[local.vertex]))
    if not np.any(sel):
        return 0.0
    fl = np.sqrt(np.einsum("elq,elq->el", bq.w, snt * snt))
    return float(fl[sel].max())
