"""Classical (not pressure-robust) equilibrated pseudo-stress.

Each row of the flux is a BDM_k field solving the mixed problem::

    (s_i, tau) + (u_i, div tau) = (sigma_bar_i - p_h e_i, tau)
    (v, div s_i)                = -(f_i, v)

for all tau in BDM_k and v in discontinuous P_{k-1}.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .estimate import EstimatorConfig, EstimatorReport
from .fem.assembly import TripletAccumulator, mass_matrix
from .fem.geometry import chunks, element_quadrature
from .fem.interpolation import as_element_function
from .fem.linalg import SparseSystem, solve_linear
from .fem.spaces import BDMSpace, DGSpace, FEFunction

CHUNK = 2048


class ClassicalFlux:
    """Row-wise BDM_k pseudo-stress with the auxiliary DG multiplier."""

    def __init__(self, rows, u_tilde, k):
        self.rows = rows
        self.u_tilde = u_tilde
        self.k = k
        self.mesh = rows[0].space.mesh

    def __call__(self, elems, x):
        return np.stack([r(elems, x) for r in self.rows], axis=-2)

    def div(self, elems, x):
        return np.stack([r.div(elems, x) for r in self.rows], axis=-1)


def solve_ceq(sol, f=None, k=None, quad_degree=None):
    """Classical equilibrated pseudo-stress with pressure gauge (0, p_h)."""
    mesh = sol.mesh
    k = sol.pair.order if k is None else k
    f = as_element_function(sol.problem.f if f is None else f)
    qf = quad_degree or sol.problem.quad_degree or 12
    W = BDMSpace(mesh, k)
    Y = DGSpace(mesh, k - 1)
    M = mass_matrix(W)
    B = TripletAccumulator((Y.n_dofs, W.n_dofs))
    g = np.zeros((W.n_dofs, 2))
    fy = np.zeros((Y.n_dofs, 2))
    qs = 2 * max(k, sol.velocity.space.poly_degree)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, qs)
        psi = W.eval(el, x)
        q = Y.eval(el, x)[..., 0]
        local = np.einsum("eq,eqa,eqb->eab", w, q, W.div(el, x), optimize=True)
        B.add(Y.element_dofs[el], W.element_dofs[el], local)
        target = sol.sigma(el, x) - sol.pressure(el, x)[..., None, None] * np.eye(2)
        gl = np.einsum("eq,eqic,eqbc->ebi", w, target, psi, optimize=True)
        for i in range(2):
            np.add.at(g[:, i], W.element_dofs[el].ravel(), gl[..., i].ravel())
        x, w = element_quadrature(mesh, el, qf)
        fl = np.einsum("eq,eqi,eqb->ebi", w, f(el, x), Y.eval(el, x)[..., 0], optimize=True)
        for i in range(2):
            np.add.at(fy[:, i], Y.element_dofs[el].ravel(), fl[..., i].ravel())
    B = B.tocsr()
    K = sp.bmat([[M, B.T], [B, None]], format="csr")
    rhs = np.concatenate([g, -fy])
    x = solve_linear(SparseSystem(K, rhs), context="classical equilibration")
    rows = [FEFunction(W, x[:W.n_dofs, i]) for i in range(2)]
    ut = x[W.n_dofs:]
    return ClassicalFlux(rows, ut, k)


def eta_ceq(flux, sol, config=None, f=None, quad_degree=None):
    """Classical guaranteed bound with contributions per element.

    ``eta_f_T = h_T ||f + div s||_T / (nu pi)``,
    ``eta_sigma_T = ||s + p_h I - sigma_bar||_T / nu``,
    ``eta_div_T = ||div u_h||_T / c0``.
    """
    config = config or EstimatorConfig()
    mesh = sol.mesh
    nu = sol.nu
    f = as_element_function(sol.problem.f if f is None else f)
    qf = quad_degree or sol.problem.quad_degree or 12
    ef = np.zeros(mesh.n_elements)
    es = np.zeros(mesh.n_elements)
    ed = np.zeros(mesh.n_elements)
    qs = 2 * max(flux.k, sol.velocity.space.poly_degree)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, qf)
        r = f(el, x) + flux.div(el, x)
        ef[el] = np.sqrt(np.einsum("eq,eqi,eqi->e", w, r, r))
        x, w = element_quadrature(mesh, el, qs)
        d = flux(el, x) + sol.pressure(el, x)[..., None, None] * np.eye(2) - sol.sigma(el, x)
        es[el] = np.sqrt(np.einsum("eq,eqij,eqij->e", w, d, d))
        dv = sol.div_velocity(el, x)
        ed[el] = np.sqrt(np.einsum("eq,eq->e", w, dv * dv))
    h = mesh.element_diameters
    return EstimatorReport(h * ef / (nu * np.pi), es / nu, ed / config.c0, config, "CEQ")
