"""Primal pressure-robust Stokes discretizations.

Solves ``nu (grad u, grad v) - (div v, p) = (f, R v)``, ``(div u, q) = 0``
with a zero-mean pressure, where ``R`` is the pair's reconstruction into
H(div) (BDM interpolation or the identity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem.assembly import TripletAccumulator, scatter_vector, stiffness_matrix
from .fem.geometry import chunks, element_quadrature
from .fem.interpolation import as_element_function
from .fem.linalg import SingularSystemError, SparseSystem, solve_linear
from .fem.spaces import BDMSpace, DGSpace, FEFunction, LagrangeSpace

CHUNK = 2048


@dataclass(frozen=True)
class StokesPair:
    """An inf-sup stable velocity/pressure pair.

    Attributes
    ----------
    tag : str
    velocity_degree : int
    bubble : bool
        Enrich the P2 velocity with cubic element bubbles.
    pressure_degree : int
        Degree of the discontinuous pressure.
    order : int
        Expected H1 convergence order r of the velocity.
    reconstruction : int or None
        Degree of the BDM interpolation used on the right-hand side, or
        ``None`` for the identity (exactly divergence-free pairs).
    barycentric : bool
        The pair needs a barycentrically refined mesh.
    """

    tag: str
    velocity_degree: int
    bubble: bool
    pressure_degree: int
    order: int
    reconstruction: int | None
    barycentric: bool = False

    def velocity_space(self, mesh):
        return LagrangeSpace(mesh, self.velocity_degree, vector=True, bubble=self.bubble)

    def pressure_space(self, mesh):
        return DGSpace(mesh, self.pressure_degree)


PAIRS = {
    "P20": StokesPair("P20", 2, False, 0, 1, 1),
    "P31": StokesPair("P31", 3, False, 1, 2, 2),
    "P2B": StokesPair("P2B", 2, True, 1, 2, 2),
    "SV": StokesPair("SV", 2, False, 1, 2, None, barycentric=True),
}


def get_pair(pair):
    if isinstance(pair, StokesPair):
        return pair
    try:
        return PAIRS[str(pair).upper()]
    except KeyError:
        raise ValueError(f"unknown pair {pair!r}; choose from {sorted(PAIRS)}") from None


class StokesSolution:
    """Discrete velocity and pressure of a primal solve.

    Attributes
    ----------
    pair, mesh, nu
    velocity : FEFunction
    pressure : FEFunction
    problem : StokesProblem
    quad_degree : int
        Quadrature degree used for the load; consumers integrating ``f``
        against discrete functions reuse it so that discrete identities hold
        to rounding.
    """

    def __init__(self, pair, problem, velocity, pressure, quad_degree=None):
        self.pair = pair
        self.quad_degree = quad_degree
        self.problem = problem
        self.mesh = problem.mesh
        self.nu = problem.nu
        self.velocity = velocity
        self.pressure = pressure

    @property
    def ndof(self):
        return self.velocity.space.n_dofs + self.pressure.space.n_dofs

    def sigma(self, elems, x):
        """Discrete stress nu * grad u_h, shape (ne, nq, 2, 2)."""
        return self.nu * self.velocity.grad(elems, x)

    def div_velocity(self, elems, x):
        return self.velocity.div(elems, x)


def _reconstruction_load(V, pair, f, quad_degree):
    """(f, R phi_i) for all velocity basis functions phi_i."""
    mesh = V.mesh
    f = as_element_function(f)
    out = np.zeros(V.n_dofs)
    bdm = BDMSpace(mesh, pair.reconstruction) if pair.reconstruction else None
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, quad_degree)
        fv = f(el, x)
        if bdm is None:
            local = np.einsum("eq,eqc,eqbc->eb", w, fv, V.eval(el, x), optimize=True)
        else:
            F = np.einsum("eq,eqc,eqjc->ej", w, fv, bdm.eval(el, x), optimize=True)
            D = bdm.local_dofs(el, lambda e, y: V.eval(e, y))  # (ne, nbV, nbBDM)
            local = np.einsum("eij,ej->ei", D, F)
        np.add.at(out, V.element_dofs[el].ravel(), local.ravel())
    return out


def _divergence_matrix(V, Q):
    """B[q, v] = (div v, q)."""
    mesh = V.mesh
    qd = V.poly_degree - 1 + Q.poly_degree
    total = TripletAccumulator((Q.n_dofs, V.n_dofs))
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, qd)
        local = np.einsum("eq,eqa,eqb->eab", w, Q.eval(el, x)[..., 0], V.div(el, x), optimize=True)
        total.add(Q.element_dofs[el], V.element_dofs[el], local)
    return total.tocsr()


def _pressure_means(Q):
    mesh = Q.mesh
    out = np.zeros(Q.n_dofs)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, max(Q.poly_degree, 1))
        local = np.einsum("eq,eqb->eb", w, Q.eval(el, x)[..., 0])
        out += scatter_vector(Q.element_dofs[el], local, Q.n_dofs)
    return out


def solve_stokes(problem, pair, quad_degree=None):
    """Solve the primal problem; returns a :class:`StokesSolution`.

    Dirichlet data are imposed by nodal interpolation on boundary dofs; the
    pressure mean is fixed to zero by one bordered constraint row.
    """
    pair = get_pair(pair)
    mesh = problem.mesh
    V = pair.velocity_space(mesh)
    Q = pair.pressure_space(mesh)
    if quad_degree is None:
        quad_degree = problem.quad_degree or (2 * pair.order + 4)
    A = problem.nu * stiffness_matrix(V)
    B = _divergence_matrix(V, Q)
    K = sp.bmat([[A, -B.T], [-B, None]], format="csr")
    nV, nQ = V.n_dofs, Q.n_dofs
    rhs = np.concatenate([_reconstruction_load(V, pair, problem.f, quad_degree), np.zeros(nQ)])

    bnd = V.boundary_dofs()
    ubnd = np.zeros(nV)
    if problem.dirichlet is not None:
        ubnd = V.interpolate(as_element_function(problem.dirichlet))
        keep = np.zeros(nV, dtype=bool)
        keep[bnd] = True
        ubnd[~keep] = 0.0
        # the interpolant has a small net boundary flux; remove it with the
        # smallest correction so that the constant pressure stays in the kernel
        g = B.T @ Q.interpolate(lambda e, x: np.ones(x.shape[:-1]))
        gb = g[bnd]
        if np.any(gb):
            ubnd[bnd] -= (gb @ ubnd[bnd]) / (gb @ gb) * gb
    full_bc = np.concatenate([ubnd, np.zeros(nQ)])
    rhs = rhs - K @ full_bc
    free = np.ones(nV + nQ, dtype=bool)
    free[bnd] = False
    idx = np.flatnonzero(free)
    Kf = K[idx][:, idx]
    mean_row = np.concatenate([np.zeros(nV), _pressure_means(Q)])[idx]
    const = np.concatenate([np.zeros(nV), Q.interpolate(lambda e, x: np.ones(x.shape[:-1]))])[idx]
    system = SparseSystem(Kf, rhs[idx], sp.csr_matrix(mean_row[None, :]), kernel=const)
    try:
        x, _ = solve_linear(system, context=f"Stokes pair {pair.tag}")
    except SingularSystemError as exc:
        hint = " (SV requires a barycentrically refined mesh)" if pair.barycentric else ""
        raise SingularSystemError(str(exc) + hint, exc.pivot) from None
    full = full_bc.copy()
    full[idx] = x
    return StokesSolution(pair, problem, FEFunction(V, full[:nV]), FEFunction(Q, full[nV:]),
                          quad_degree)


def apply_reconstruction(pair, velocity):
    """Image of a velocity field under the pair's reconstruction operator."""
    pair = get_pair(pair)
    if pair.reconstruction is None:
        return velocity
    space = BDMSpace(velocity.space.mesh, pair.reconstruction)
    return FEFunction(space, space.interpolate(velocity))


def h1_error(velocity, grad_exact, quad_degree=12, singular_points=(), depth=10, nu=None):
    """Broken H1 seminorm of ``u - u_h`` (times ``nu`` if given for stresses).

    Elements having a vertex at one of ``singular_points`` are integrated on
    a geometrically graded subdivision towards that vertex.
    """
    mesh = velocity.space.mesh
    total = 0.0
    sing = np.zeros(mesh.n_elements, dtype=bool)
    for pt in singular_points:
        d = np.linalg.norm(mesh.vertices[mesh.triangles] - np.asarray(pt), axis=-1)
        sing |= (d < 1e-14).any(axis=1)
    regular = np.flatnonzero(~sing)
    for el in chunks(len(regular), CHUNK):
        el = regular[el]
        x, w = element_quadrature(mesh, el, quad_degree)
        diff = grad_exact(x) - velocity.grad(el, x)
        total += float(np.einsum("eq,eqij,eqij->", w, diff, diff))
    for e in np.flatnonzero(sing):
        total += _graded_element_integral(mesh, e, velocity, grad_exact, quad_degree,
                                          singular_points, depth)
    return np.sqrt(total)


def div_norm(velocity, per_element=False):
    """``||div u_h||`` over the mesh by exact quadrature of the polynomial divergence."""
    mesh = velocity.space.mesh
    qd = max(2 * (velocity.space.poly_degree - 1), 1)
    out = np.zeros(mesh.n_elements)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, qd)
        d = velocity.div(el, x)
        out[el] = np.einsum("eq,eq->e", w, d * d)
    return np.sqrt(out) if per_element else float(np.sqrt(out.sum()))


def _graded_element_integral(mesh, e, velocity, grad_exact, qd, singular_points, depth):
    from .fem.quadrature import make_quadrature

    rule = make_quadrature(qd)
    p = mesh.vertices[mesh.triangles[e]]
    sp_ = [np.asarray(s) for s in singular_points]
    k = next(i for i in range(3) if any(np.linalg.norm(p[i] - s) < 1e-14 for s in sp_))
    p = np.roll(p, -k, axis=0)  # singular vertex first
    pieces = []
    tri = p
    for _ in range(depth):
        m01, m02, m12 = (tri[0] + tri[1]) / 2, (tri[0] + tri[2]) / 2, (tri[1] + tri[2]) / 2
        pieces += [np.array([m01, tri[1], m12]), np.array([m02, m12, tri[2]]),
                   np.array([m01, m12, m02])]
        tri = np.array([tri[0], m01, m02])
    pieces.append(tri)
    pieces = np.array(pieces)
    r = rule.points
    x = (pieces[:, None, 0] + r[None, :, 0, None] * (pieces[:, None, 1] - pieces[:, None, 0])
         + r[None, :, 1, None] * (pieces[:, None, 2] - pieces[:, None, 0]))
    d1, d2 = pieces[:, 1] - pieces[:, 0], pieces[:, 2] - pieces[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    w = rule.weights[None, :] * 2 * area[:, None]
    xf = x.reshape(1, -1, 2)
    diff = grad_exact(xf) - velocity.grad(np.array([e]), xf)
    return float(np.einsum("q,qij,qij->", w.ravel(), diff[0], diff[0]))
