"""Benchmark problems with closed-form solutions.

All callables take points ``x`` of shape (..., 2).  Vector fields return
(..., 2), gradients (..., 2, 2) with ``[..., i, j] = d u_i / d x_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import l_shape_mesh, unit_square_mesh


@dataclass
class StokesProblem:
    """Data of a Stokes problem on a mesh.

    Parameters
    ----------
    mesh : Mesh
    nu : float
        Viscosity, must be positive.
    f : callable
        Body force.
    curl_f : callable or None
        Scalar curl ``d f_2 / dx - d f_1 / dy``; required by the estimator
        unless ``curl_f_zero`` declares it identically zero.
    dirichlet : callable or None
        Boundary velocity; ``None`` means homogeneous.
    curl_f_zero : bool
    quad_degree : int or None
        Quadrature degree for integrals involving ``f``.
    """

    mesh: object
    nu: float
    f: Callable
    curl_f: Callable | None = None
    dirichlet: Callable | None = None
    curl_f_zero: bool = False
    quad_degree: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"viscosity must be positive, got {self.nu}")

    def with_mesh(self, mesh):
        return StokesProblem(mesh, self.nu, self.f, self.curl_f, self.dirichlet,
                             self.curl_f_zero, self.quad_degree)


@dataclass
class BenchmarkProblem:
    """A manufactured problem with exact velocity, velocity gradient and pressure."""

    name: str
    mesh_factory: Callable
    nu: float
    u: Callable
    grad_u: Callable
    p: Callable
    f: Callable
    curl_f: Callable | None
    dirichlet: Callable | None
    curl_f_zero: bool = False
    c0: float = 0.3
    quad_degree: int = 12
    error_quad_degree: int = 12
    singular_points: tuple = field(default_factory=tuple)
    laplace_u: Callable | None = None
    grad_p: Callable | None = None

    def mesh(self, n):
        return self.mesh_factory(n)

    def stokes_problem(self, mesh):
        return StokesProblem(mesh, self.nu, self.f, self.curl_f, self.dirichlet,
                             self.curl_f_zero, self.quad_degree)


# -- smooth square ------------------------------------------------------------

def _g(x):
    return x * x * (1 - x) ** 2


def _dg(x, n):
    if n == 0:
        return x ** 2 - 2 * x ** 3 + x ** 4
    if n == 1:
        return 2 * x - 6 * x ** 2 + 4 * x ** 3
    if n == 2:
        return 2 - 12 * x + 12 * x ** 2
    if n == 3:
        return -12 + 24 * x
    if n == 4:
        return 24.0 + 0 * x
    return 0 * x


def problem_smooth_square(nu=1.0):
    """u = curl(x^2 (1-x)^2 y^2 (1-y)^2), p = x^5 + y^5 - 1/3 on the unit square."""

    def u(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([_dg(X, 0) * _dg(Y, 1), -_dg(X, 1) * _dg(Y, 0)], axis=-1)

    def grad_u(x):
        X, Y = x[..., 0], x[..., 1]
        a = _dg(X, 1) * _dg(Y, 1)
        return np.stack([np.stack([a, _dg(X, 0) * _dg(Y, 2)], -1),
                         np.stack([-_dg(X, 2) * _dg(Y, 0), -a], -1)], axis=-2)

    def laplace_u(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([_dg(X, 2) * _dg(Y, 1) + _dg(X, 0) * _dg(Y, 3),
                         -(_dg(X, 3) * _dg(Y, 0) + _dg(X, 1) * _dg(Y, 2))], axis=-1)

    def p(x):
        return x[..., 0] ** 5 + x[..., 1] ** 5 - 1.0 / 3.0

    def grad_p(x):
        return 5.0 * x ** 4

    def f(x):
        return -nu * laplace_u(x) + grad_p(x)

    def curl_f(x):
        X, Y = x[..., 0], x[..., 1]
        return nu * (_dg(X, 4) * _dg(Y, 0) + 2 * _dg(X, 2) * _dg(Y, 2) + _dg(X, 0) * _dg(Y, 4))

    return BenchmarkProblem("smooth_square", unit_square_mesh, nu, u, grad_u, p, f, curl_f,
                            None, quad_degree=12, error_quad_degree=12,
                            laplace_u=laplace_u, grad_p=grad_p)


# -- L-shape ------------------------------------------------------------------

LSHAPE_ALPHA = 856399.0 / 1572864.0
LSHAPE_OMEGA = 1.5 * np.pi


def _psi(phi, n, alpha=LSHAPE_ALPHA, omega=LSHAPE_OMEGA):
    """n-th derivative of the angular profile."""
    ap, am = alpha + 1.0, alpha - 1.0
    c = np.cos(alpha * omega)

    def dsin(a, n):  # d^n/dphi^n sin(a phi)
        return a ** n * np.sin(a * phi + n * np.pi / 2)

    def dcos(a, n):
        return a ** n * np.cos(a * phi + n * np.pi / 2)

    return (dsin(ap, n) * c / ap - dcos(ap, n) - dsin(am, n) * c / am + dcos(am, n))


def _polar(x):
    X, Y = x[..., 0], x[..., 1]
    R = np.hypot(X, Y)
    phi = np.arctan2(Y, X)
    phi = np.where(phi < 0, phi + 2 * np.pi, phi)
    return R, phi


def _lshape_w(phi, alpha):
    s, c = np.sin(phi), np.cos(phi)
    p0, p1, p2 = (_psi(phi, n, alpha) for n in range(3))
    a1 = alpha + 1.0
    w = np.stack([a1 * s * p0 + c * p1, -a1 * c * p0 + s * p1], axis=-1)
    dw = np.stack([a1 * (c * p0 + s * p1) - s * p1 + c * p2,
                   a1 * (s * p0 - c * p1) + c * p1 + s * p2], axis=-1)
    return w, dw


def problem_lshape(nu=1.0, alpha=LSHAPE_ALPHA):
    """Corner singularity on (-1,1)^2 minus (0,1)x(-1,0) plus a smooth pressure.

    The angle runs from the positive x-axis (phi = 0) counter-clockwise to
    the negative y-axis (phi = 3 pi / 2).  The body force is the gradient
    of ``sin(pi x y)``, so its curl vanishes identically.

    ``alpha`` defaults to the binary64 value of 856399/1572864, which
    approximates the corner exponent to about 7.5e-8; the velocity therefore
    deviates from zero on the leg phi = 3 pi / 2 by a few 1e-6.  Passing
    :func:`lshape_exponent` gives the exact root instead.
    """

    def u(x):
        R, phi = _polar(x)
        w, _ = _lshape_w(phi, alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (R ** alpha)[..., None] * w
        return np.where((R > 0)[..., None], out, 0.0)

    def grad_u(x):
        R, phi = _polar(x)
        w, dw = _lshape_w(phi, alpha)
        s, c = np.sin(phi)[..., None], np.cos(phi)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (R ** (alpha - 1.0))[..., None]
            dx = r * (alpha * c * w - s * dw)
            dy = r * (alpha * s * w + c * dw)
        return np.stack([dx, dy], axis=-1)

    def p0(x):
        # sign chosen so that -nu lap u + grad p0 = 0 with the angle convention above
        R, phi = _polar(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -nu * R ** (alpha - 1.0) * ((1 + alpha) ** 2 * _psi(phi, 1, alpha) + _psi(phi, 3, alpha)) / (1 - alpha)

    def p(x):
        return p0(x) + np.sin(np.pi * x[..., 0] * x[..., 1])

    def f(x):
        X, Y = x[..., 0], x[..., 1]
        c = np.pi * np.cos(np.pi * X * Y)
        return np.stack([c * Y, c * X], axis=-1)

    prob = BenchmarkProblem("lshape", l_shape_mesh, nu, u, grad_u, p, f, None, u,
                            curl_f_zero=True, quad_degree=12, error_quad_degree=15,
                            singular_points=((0.0, 0.0),), grad_p=None)
    prob.p0 = p0
    return prob


def lshape_exponent(omega=LSHAPE_OMEGA):
    """Smallest positive root of sin(a w)^2 = a^2 sin(w)^2 in (0.5, 1) for the angle w."""
    from scipy.optimize import brentq

    return brentq(lambda a: np.sin(a * omega) + a * np.sin(omega), 0.51, 0.99, xtol=1e-16)


# -- manufactured-solution self-check ----------------------------------------

class ManufacturedSolutionError(RuntimeError):
    pass


def sample_points(problem, n, seed=0, margin=0.05):
    """``n`` random points inside the domain, at least ``margin`` from corners and edges."""
    rng = np.random.default_rng(seed)
    if problem.name == "smooth_square":
        return rng.uniform(margin, 1.0 - margin, size=(n, 2))
    out = np.empty((0, 2))
    while len(out) < n:
        x = rng.uniform(-1.0 + margin, 1.0 - margin, size=(2 * n, 2))
        cut = (x[:, 0] > -margin) & (x[:, 1] < margin)
        far = np.hypot(x[:, 0], x[:, 1]) > margin
        out = np.vstack([out, x[~cut & far]])
    return out[:n]


def _fd_derivatives(fn, x, h):
    """Fourth-order central differences: first derivatives (.., 2, c) and Laplacian (.., c)."""
    e = np.eye(2) * h
    grad, lap = [], 0.0
    f0 = np.asarray(fn(x), dtype=float)
    for d in range(2):
        fp1, fm1 = fn(x + e[d]), fn(x - e[d])
        fp2, fm2 = fn(x + 2 * e[d]), fn(x - 2 * e[d])
        grad.append((8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h))
        lap = lap + (-(fp2 + fm2) + 16 * (fp1 + fm1) - 30 * f0) / (12 * h * h)
    return np.stack(grad, axis=1), lap


def manufactured_residual(problem, n=100, seed=0, h=1e-3):
    """Relative residuals of ``-nu lap u + grad p = f`` and ``div u = 0`` at random points.

    Derivatives are taken by finite differences of ``u`` and ``p`` only, so
    the check is independent of the closed-form ``f`` and gradients.
    """
    x = sample_points(problem, n, seed)
    gu, lu = _fd_derivatives(problem.u, x, h)
    gp, _ = _fd_derivatives(problem.p, x, h)
    f = problem.f(x)
    lhs = -problem.nu * lu + gp
    scale = max(np.abs(problem.nu * lu).max(), np.abs(gp).max(), np.abs(f).max(), 1e-300)
    mom = float(np.abs(lhs - f).max() / scale)
    div = float(np.abs(gu[:, 0, 0] + gu[:, 1, 1]).max() / max(np.abs(gu).max(), 1e-300))
    return mom, div


def check_manufactured(problem, tol=1e-6):
    """Raise :class:`ManufacturedSolutionError` if the closed forms are inconsistent."""
    mom, div = manufactured_residual(problem)
    if not (mom <= tol and div <= tol):
        raise ManufacturedSolutionError(
            f"{problem.name}: manufactured residuals momentum {mom:.2e}, divergence {div:.2e}")
    return mom, div


PROBLEMS = {"smooth_square": problem_smooth_square, "lshape": problem_lshape}


def get_problem(name, nu=1.0):
    try:
        return PROBLEMS[name](nu)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
