"""Equilibrated fluxes, the guaranteed estimator and equilibration checks.

Estimator for a trace-free flux ``sigma`` and discrete stress
``sigma_bar = nu grad u_h``::

    eta^2 = sum_T nu^-2 (c1 c2 h_T^2 ||(1 - pi_{k-2}) curl f||_T
                         + ||sigma - dev sigma_bar||_T)^2
            + c0^-2 ||div u_h||^2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem.geometry import BoundaryQuadrature, chunks, element_quadrature, facet_quadrature
from .fem.interpolation import as_element_function
from .fem.spaces import DGSpace, FEFunction, LagrangeSpace, TraceFreeSpace

CHUNK = 2048


class MissingCurlError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    """Constants of the estimator: inf-sup bound c0 and interpolation constants c1, c2."""

    c0: float = 0.3
    c1: float = 1.0
    c2: float = 1.0
    k: int | None = None

    def __post_init__(self):
        for name in ("c0", "c1", "c2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass
class EstimatorReport:
    """Per-element contributions and totals.

    ``eta_f_T`` and ``eta_sigma_T`` already carry the ``1/nu`` factor (and
    ``c1 c2`` for the oscillation); ``eta_div_T`` carries ``1/c0``.  The
    per-element indicator is ``sqrt((eta_f_T + eta_sigma_T)^2 + eta_div_T^2)``.
    """

    eta_f_T: np.ndarray
    eta_sigma_T: np.ndarray
    eta_div_T: np.ndarray
    config: EstimatorConfig
    method: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def indicators(self):
        return np.sqrt((self.eta_f_T + self.eta_sigma_T) ** 2 + self.eta_div_T ** 2)

    @property
    def eta(self):
        return float(np.sqrt(np.sum(self.indicators ** 2)))

    @property
    def eta_f(self):
        return float(np.sqrt(np.sum(self.eta_f_T ** 2)))

    @property
    def eta_sigma(self):
        return float(np.sqrt(np.sum(self.eta_sigma_T ** 2)))

    @property
    def eta_div(self):
        return float(np.sqrt(np.sum(self.eta_div_T ** 2)))

    def recompose(self):
        """Total recomputed from the parts, for consistency checks."""
        return float(np.sqrt(np.sum((self.eta_f_T + self.eta_sigma_T) ** 2)
                             + np.sum(self.eta_div_T ** 2)))


class EquilibratedFlux:
    """Trace-free piecewise polynomial stress on a mesh.

    Parameters
    ----------
    space : TraceFreeSpace
    coeffs : ndarray
    provenance : str
        ``"GEQ"`` or ``"LEQ"``.
    """

    def __init__(self, space, coeffs, provenance, extra=None):
        self.space = space
        self.mesh = space.mesh
        self.k = space.degree
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.provenance = provenance
        self.extra = extra or {}
        self._fun = FEFunction(space, self.coeffs)

    def __call__(self, elems, x):
        v = self._fun(elems, x)
        return v.reshape(v.shape[:-1] + (2, 2))

    def div(self, elems, x):
        return self._fun.div(elems, x)

    def nt_jump_residual(self):
        return nt_jump_residual(self)


def dev(A):
    """Deviatoric part of matrices (..., 2, 2)."""
    tr = 0.5 * (A[..., 0, 0] + A[..., 1, 1])
    out = np.array(A, dtype=float, copy=True)
    out[..., 0, 0] -= tr
    out[..., 1, 1] -= tr
    return out


def tracefree_coefficients(mesh, k, fn, quad_degree=None):
    """Coefficients of the L2 projection of dev(fn) onto the trace-free space."""
    space = TraceFreeSpace(mesh, k)

    def flat(elems, x):
        v = fn(elems, x)
        return v.reshape(v.shape[:-2] + (4,))

    return space, space.interpolate(flat, quad_degree)


def _curl_oscillation(mesh, curl_f, k, quad_degree):
    """||(1 - pi_{k-2}) curl f||_T per element."""
    out = np.zeros(mesh.n_elements)
    P = DGSpace(mesh, k - 2) if k >= 2 else None
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, quad_degree)
        g = np.asarray(curl_f(x), dtype=float)
        if P is not None:
            phi = P.eval(el, x)[..., 0]
            c = np.einsum("eq,eq,eqb->eb", w, g, phi)
            g = g - np.einsum("eb,eqb->eq", c, phi)
        out[el] = np.sqrt(np.einsum("eq,eq->e", w, g * g))
    return out


def compute_eta(flux, sol, config=None, curl_f=None, curl_f_zero=None, quad_degree=None):
    """Estimator for a trace-free equilibrated flux.

    ``curl_f`` and ``curl_f_zero`` default to the values stored on the
    solution's problem.  A missing curl that is not declared zero raises
    :class:`MissingCurlError`.
    """
    config = config or EstimatorConfig()
    problem = sol.problem
    mesh = sol.mesh
    nu = sol.nu
    k = flux.k
    if curl_f is None:
        curl_f = problem.curl_f
    if curl_f_zero is None:
        curl_f_zero = problem.curl_f_zero
    qd = quad_degree or problem.quad_degree or 12
    h = mesh.element_diameters
    if curl_f_zero:
        osc = np.zeros(mesh.n_elements)
    elif curl_f is None:
        raise MissingCurlError("curl f is required by the estimator; supply it or declare it zero")
    else:
        osc = _curl_oscillation(mesh, curl_f, k, qd)
    eta_f = config.c1 * config.c2 * h ** 2 * osc / nu
    sig = np.zeros(mesh.n_elements)
    div = np.zeros(mesh.n_elements)
    qs = 2 * max(k, sol.velocity.space.poly_degree - 1)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, qs)
        d = flux(el, x) - dev(sol.sigma(el, x))
        sig[el] = np.sqrt(np.einsum("eq,eqij,eqij->e", w, d, d))
        dv = sol.div_velocity(el, x)
        div[el] = np.sqrt(np.einsum("eq,eq->e", w, dv * dv))
    return EstimatorReport(eta_f, sig / nu, div / config.c0, config, flux.provenance)


def distributional_divergence(flux_fn, elems_tests, mesh, test_space, quad_degree,
                              magnitude=False):
    """Sum_T (div sigma, v)_T - (sigma_nn, v.n_T)_dT for every basis function of ``test_space``.

    ``flux_fn`` is an object with ``__call__`` and ``div`` in the element
    calling convention.  With ``magnitude=True`` the sum of absolute
    element contributions is returned as a second array.
    """
    out = np.zeros(test_space.n_dofs)
    mag = np.zeros(test_space.n_dofs)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, quad_degree)
        dv = flux_fn.div(el, x)  # (ne,nq,2)
        phi = test_space.eval(el, x)
        local = np.einsum("eq,eqi,eqbi->eb", w, dv, phi, optimize=True)
        bq = BoundaryQuadrature(mesh, el, quad_degree)
        ne, nq = len(el), len(bq.s)
        pts = bq.flat_points
        s = flux_fn(el, pts).reshape(ne, 3, nq, 2, 2)
        n = bq.normal
        snn = np.einsum("elqij,eli,elj->elq", s, n, n)
        ph = test_space.eval(el, pts).reshape(ne, 3, nq, -1, 2)
        local -= np.einsum("elq,elq,elqbi,eli->eb", bq.w, snn, ph, n, optimize=True)
        np.add.at(out, test_space.element_dofs[el].ravel(), local.ravel())
        np.add.at(mag, test_space.element_dofs[el].ravel(), np.abs(local).ravel())
    return (out, mag) if magnitude else out


class _CurlBasis:
    """curl psi for the scalar continuous P_{k+1} basis: (d_y psi, -d_x psi)."""

    def __init__(self, mesh, k):
        self.scalar = LagrangeSpace(mesh, k + 1)
        self.mesh = mesh
        self.n_dofs = self.scalar.n_dofs
        self.element_dofs = self.scalar.element_dofs

    def eval(self, elems, x):
        g = self.scalar.grad(elems, x)[..., 0, :]
        return np.stack([g[..., 1], -g[..., 0]], axis=-1)


def verify_discrete_equilibration(flux, f, k=None, quad_degree=12):
    """Relative residual of (f, v) + <div sigma, v> over div-free RT_k cap H0(div).

    The test space is spanned by curls of continuous P_{k+1} functions
    vanishing on the boundary.  Returns ``max_i |r_i| / scale`` where
    ``scale`` is the largest sum of absolute element contributions entering
    one residual.  Gradient forces cancel exactly against the divergence-free
    tests only after assembly, so this scale (rather than the size of the
    cancelled sums) measures the defect against the floating point level of
    the data.
    """
    mesh = flux.mesh
    k = flux.k if k is None else k
    tests = _CurlBasis(mesh, k)
    f = as_element_function(f)
    load = np.zeros(tests.n_dofs)
    mag = np.zeros(tests.n_dofs)
    for el in chunks(mesh.n_elements, CHUNK):
        x, w = element_quadrature(mesh, el, quad_degree)
        local = np.einsum("eq,eqi,eqbi->eb", w, f(el, x), tests.eval(el, x), optimize=True)
        np.add.at(load, tests.element_dofs[el].ravel(), local.ravel())
        np.add.at(mag, tests.element_dofs[el].ravel(), np.abs(local).ravel())
    ddiv, dmag = distributional_divergence(flux, None, mesh, tests, max(2 * k + 2, 4),
                                           magnitude=True)
    free = tests.scalar.free_dofs()
    res = np.abs(load + ddiv)[free]
    scale = (mag + dmag)[free].max(initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(res.max() / scale)


def nt_jump_residual(flux, quad_degree=None):
    """Max over interior facets of |int_F [sigma n_F . t_F] q| / scale, q in P_k(F)."""
    mesh = flux.mesh
    k = flux.k
    qd = quad_degree or 2 * k + 2
    inner = np.flatnonzero(~mesh.boundary_facet_mask)
    if inner.size == 0:
        return 0.0
    x, w, s = facet_quadrature(mesh, inner, qd)
    from .fem.polynomials import legendre_on_unit

    L = legendre_on_unit(s, k + 1)
    n = mesh.facet_normals[inner]
    t = mesh.facet_tangents[inner]
    vals = []
    for side in (0, 1):
        el = mesh.facet_elements[inner, side]
        sv = flux(el, x)
        vals.append(np.einsum("fqij,fj,fi->fq", sv, n, t))
    mom = [np.einsum("fq,fq,qj->fj", w, v, L) for v in vals]
    jump = np.abs(mom[0] - mom[1]).max()
    scale = max(np.abs(mom[0]).max(), np.abs(mom[1]).max())
    return float(jump / scale) if scale > 0 else 0.0
