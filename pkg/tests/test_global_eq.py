import numpy as np
import pytest

from stokes_eq.estimate import (EquilibratedFlux, EstimatorConfig, MissingCurlError, compute_eta,
                                dev, nt_jump_residual, tracefree_coefficients,
                                verify_discrete_equilibration)
from stokes_eq.global_eq import solve_geq
from stokes_eq.mesh import unit_square_mesh
from stokes_eq.problems import StokesProblem, problem_smooth_square
from stokes_eq.stokes import PAIRS, h1_error, solve_stokes

from conftest import cached_solution, working_mesh

CASES = [(prob, pair) for prob in ("smooth_square", "lshape") for pair in sorted(PAIRS)]


@pytest.fixture(scope="module")
def geq():
    out = {}

    def get(problem, pair, nu=1.0):
        key = (problem, pair, nu)
        if key not in out:
            prob, sol = cached_solution(problem, pair, nu, 2)
            out[key] = (prob, sol, solve_geq(sol))
        return out[key]
    return get


@pytest.mark.parametrize("problem, pair", CASES)
def test_geq_discretely_equilibrated(geq, problem, pair):
    prob, _, flux = geq(problem, pair)
    assert verify_discrete_equilibration(flux, prob.f) <= 1e-9


@pytest.mark.parametrize("problem, pair", CASES)
def test_geq_nt_continuous(geq, problem, pair):
    _, _, flux = geq(problem, pair)
    assert nt_jump_residual(flux) <= 1e-9


def test_equilibration_check_detects_discrete_stress(geq):
    # the projected discrete stress is not equilibrated, so the check must fire
    prob, sol, flux = geq("smooth_square", "P2B")
    space, c = tracefree_coefficients(sol.mesh, flux.k, sol.sigma)
    raw = EquilibratedFlux(space, c, "raw")
    assert verify_discrete_equilibration(raw, prob.f) >= 1e-4


def test_geq_zero_load_gives_zero_flux():
    mesh = working_mesh(unit_square_mesh(2), "SV")
    sol = solve_stokes(StokesProblem(mesh, 1.0, lambda x: np.zeros_like(x), curl_f_zero=True), "SV")
    flux = solve_geq(sol)
    assert np.abs(flux.coeffs).max() == 0.0
    assert compute_eta(flux, sol).eta == 0.0


@pytest.mark.parametrize("pair", ["SV", "P2B", "P31"])
def test_geq_flux_scales_with_viscosity(geq, pair):
    _, _, a = geq("smooth_square", pair, 1.0)
    _, _, b = geq("smooth_square", pair, 1e-4)
    np.testing.assert_allclose(b.coeffs / 1e-4, a.coeffs, atol=1e-7 * np.abs(a.coeffs).max())


def test_geq_flux_ignores_gradient_forces():
    prob = problem_smooth_square(1e-3)
    mesh = working_mesh(unit_square_mesh(2), "SV")

    def f_plus(x):
        X, Y = x[..., 0], x[..., 1]
        return prob.f(x) + np.stack([2 * X * Y, X * X + 3 * Y * Y], axis=-1)

    fa = solve_geq(solve_stokes(StokesProblem(mesh, prob.nu, prob.f, quad_degree=12), "SV"))
    fb = solve_geq(solve_stokes(StokesProblem(mesh, prob.nu, f_plus, quad_degree=12), "SV"))
    np.testing.assert_allclose(fb.coeffs, fa.coeffs, atol=1e-8 * np.abs(fa.coeffs).max())


@pytest.mark.parametrize("problem, pair", CASES)
def test_geq_bound_and_report_parts(geq, problem, pair):
    prob, sol, flux = geq(problem, pair)
    rep = compute_eta(flux, sol, EstimatorConfig(c0=prob.c0))
    assert rep.eta == pytest.approx(rep.recompose(), rel=1e-14)
    assert rep.eta >= h1_error(sol.velocity, prob.grad_u, prob.error_quad_degree,
                               prob.singular_points)
    assert rep.indicators.shape == (sol.mesh.n_elements,)
    assert np.all(rep.indicators >= 0)


def test_curl_term_scales_with_constants(geq):
    _, sol, flux = geq("smooth_square", "P2B")
    a = compute_eta(flux, sol, EstimatorConfig(c1=1.0, c2=1.0))
    b = compute_eta(flux, sol, EstimatorConfig(c1=2.0, c2=3.0))
    assert a.eta_f > 0
    np.testing.assert_allclose(b.eta_f_T, 6 * a.eta_f_T, rtol=1e-14)
    np.testing.assert_array_equal(b.eta_sigma_T, a.eta_sigma_T)


def test_lshape_curl_term_is_exactly_zero(geq):
    _, sol, flux = geq("lshape", "P2B")
    rep = compute_eta(flux, sol)
    assert rep.eta_f == 0.0
    assert np.all(rep.eta_f_T == 0.0)


def test_missing_curl_is_an_error():
    mesh = working_mesh(unit_square_mesh(1), "P2B")
    prob = problem_smooth_square()
    sol = solve_stokes(StokesProblem(mesh, 1.0, prob.f), "P2B")
    with pytest.raises(MissingCurlError):
        compute_eta(solve_geq(sol), sol)


def test_dev_example():
    A = np.array([[2.0, 1.0], [3.0, 4.0]])
    np.testing.assert_array_equal(dev(A), [[-1.0, 1.0], [3.0, 1.0]])
    np.testing.assert_array_equal(A, [[2.0, 1.0], [3.0, 4.0]])
    assert np.trace(dev(np.random.default_rng(0).standard_normal((5, 2, 2))), axis1=-2,
                    axis2=-1) == pytest.approx(np.zeros(5), abs=1e-15)


def test_config_rejects_nonpositive():
    for kw in ({"c0": 0.0}, {"c1": -1.0}, {"c2": np.inf}):
        with pytest.raises(ValueError):
            EstimatorConfig(**kw)
