import numpy as np
import pytest
import sympy as sp_
from hypothesis import given, settings, strategies as st

from stokes_eq.estimate import nt_jump_residual, verify_discrete_equilibration
from stokes_eq.fem.geometry import element_quadrature, facet_quadrature
from stokes_eq.fem.spaces import FEFunction, LagrangeSpace, RTSpace
from stokes_eq.local_eq import (LocalData, assemble_leq_flux, assemble_local_residual,
                                bubble_project_scalar, bubble_project_vector, constant_pair,
                                hat_values, local_efficiency_ratio, max_threads,
                                patch_boundary_nt, patch_layout, patch_norm_squared,
                                solve_local_patch)
from stokes_eq.mesh import BOUNDARY, InvalidArgumentError, Mesh, unit_square_mesh, vertex_patch
from stokes_eq.problems import StokesProblem
from stokes_eq.stokes import solve_stokes

from conftest import TEST_MESHES, cached_solution, working_mesh

K = 2


def random_rt(mesh, seed):
    U = RTSpace(mesh, K)
    return FEFunction(U, np.random.default_rng(seed).standard_normal(U.n_dofs))


def random_divfree(mesh, seed):
    # curls of continuous P_{k+1} functions are divergence-free members of RT_k
    S = LagrangeSpace(mesh, K + 1)
    psi = FEFunction(S, np.random.default_rng(seed).standard_normal(S.n_dofs))

    def v(elems, x):
        g = psi.grad(elems, x)
        return np.stack([g[..., 1], -g[..., 0]], axis=-1)
    return v


def facet_points(mesh, facets):
    x, _, _ = facet_quadrature(mesh, np.asarray(facets), 2 * K + 2)
    return x


# -- bubble projector --------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(TEST_MESHES))
@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=3)
def test_bubble_vanishes_on_patch_boundary(name, seed):
    mesh = TEST_MESHES[name]()
    v = random_rt(mesh, seed)
    for vert in range(mesh.n_vertices):
        patch = vertex_patch(mesh, vert)
        Bv = bubble_project_vector(mesh, patch, v, K)
        scale = max(1.0, np.abs(Bv.values).max())
        for f in patch.boundary_facets:
            side = mesh.facet_elements[f]
            e = side[0] if side[0] in patch.elements else side[1]
            x = facet_points(mesh, [f])
            assert np.abs(Bv(np.array([e]), x)).max() <= 1e-9 * scale


@pytest.mark.parametrize("name", sorted(TEST_MESHES))
@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=3)
def test_bubble_of_rt_is_normal_continuous(name, seed):
    mesh = TEST_MESHES[name]()
    v = random_rt(mesh, seed)
    for vert in range(mesh.n_vertices):
        patch = vertex_patch(mesh, vert)
        Bv = bubble_project_vector(mesh, patch, v, K)
        scale = max(1.0, np.abs(Bv.values).max())
        inner = [f for f in patch.facets if mesh.facet_elements[f, 1] != BOUNDARY
                 and np.all(np.isin(mesh.facet_elements[f], patch.elements))]
        for f in inner:
            x = facet_points(mesh, [f])
            a, b = mesh.facet_elements[f]
            jump = (Bv(np.array([a]), x) - Bv(np.array([b]), x)) @ mesh.facet_normals[f]
            assert np.abs(jump).max() <= 1e-9 * scale


@pytest.mark.parametrize("name", sorted(TEST_MESHES))
@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=3)
def test_bubble_partition_of_unity_for_divfree(name, seed):
    mesh = TEST_MESHES[name]()
    v = random_divfree(mesh, seed)
    el = np.arange(mesh.n_elements)
    x, _ = element_quadrature(mesh, el, 5)
    total = np.zeros(x.shape)
    for vert in range(mesh.n_vertices):
        patch = vertex_patch(mesh, vert)
        Bv = bubble_project_vector(mesh, patch, v, K)
        total[patch.elements] += Bv(patch.elements, x[patch.elements])
    ref = v(el, x)
    assert np.abs(total - ref).max() <= 1e-9 * np.abs(ref).max()


@pytest.mark.parametrize("name", sorted(TEST_MESHES))
def test_bubble_of_constant_is_hat_times_constant(name, rng):
    mesh = TEST_MESHES[name]()
    for vert in range(mesh.n_vertices):
        c = rng.standard_normal(2)
        patch = vertex_patch(mesh, vert)
        Bc = bubble_project_vector(mesh, patch, lambda e, x: np.broadcast_to(c, x.shape), K)
        el = patch.elements
        x, _ = element_quadrature(mesh, el, 4)
        loc = np.argmax(mesh.triangles[el] == vert, axis=1)
        phi = hat_values(mesh, el, x)[np.arange(len(el)), :, loc]
        np.testing.assert_allclose(Bc(el, x), phi[..., None] * c, atol=1e-12 * np.abs(c).max())


def reference_element():
    return Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def sympy_interpolant(expr, k):
    """Nodal P_k interpolant of expr on the reference triangle, as a sympy expression."""
    X, Y = sp_.symbols("x y")
    nodes = [(sp_.Rational(i, k), sp_.Rational(j, k)) for j in range(k + 1) for i in range(k + 1 - j)]
    mons = [X ** a * Y ** b for a in range(k + 1) for b in range(k + 1 - a)]
    V = sp_.Matrix([[m.subs({X: px, Y: py}) for m in mons] for px, py in nodes])
    vals = sp_.Matrix([expr.subs({X: px, Y: py}) for px, py in nodes])
    coef = V.LUsolve(vals)
    return sum(c * m for c, m in zip(coef, mons)), (X, Y)


@pytest.mark.parametrize("k, v_expr", [(1, "x"), (2, "x"), (2, "x**2"), (3, "x*y**2 + y")])
def test_scalar_bubble_against_symbolic_interpolant(k, v_expr):
    X, Y = sp_.symbols("x y")
    v = sp_.sympify(v_expr, locals={"x": X, "y": Y})
    oracle, _ = sympy_interpolant((1 - X - Y) * v, k)
    fn = sp_.lambdify((X, Y), v, "numpy")
    m = reference_element()
    B = bubble_project_scalar(m, 0, 0, lambda x: fn(x[..., 0], x[..., 1]) + 0 * x[..., 0], k)
    pts = np.random.default_rng(5).dirichlet(np.ones(3), size=20)[:, 1:]
    want = sp_.lambdify((X, Y), oracle, "numpy")(pts[:, 0], pts[:, 1]) + 0 * pts[:, 0]
    np.testing.assert_allclose(B(np.array([0]), pts[None])[0], want, atol=1e-13)


def test_scalar_bubble_examples():
    m = reference_element()
    # phi_V x vanishes at all vertices, so its linear interpolant is zero
    B1 = bubble_project_scalar(m, 0, 0, lambda x: x[..., 0], 1)
    assert np.abs(B1.values).max() == 0.0
    # quadratic product is reproduced: x - x^2 - x y
    B2 = bubble_project_scalar(m, 0, 0, lambda x: x[..., 0], 2)
    p = np.array([[[0.2, 0.3]]])
    assert B2(np.array([0]), p)[0, 0] == pytest.approx(0.2 - 0.04 - 0.06, abs=1e-15)


def test_scalar_bubble_rejects_foreign_vertex():
    m = unit_square_mesh(1)
    other = next(v for v in range(4) if v not in m.triangles[0])
    with pytest.raises(InvalidArgumentError):
        bubble_project_scalar(m, 0, other, lambda x: x[..., 0], 2)


# -- patch problems -------------------------------------------------------------------

@pytest.fixture(scope="module")
def leq():
    out = {}

    def get(problem, pair, nu=1.0):
        key = (problem, pair, nu)
        if key not in out:
            prob, sol = cached_solution(problem, pair, nu, 2)
            out[key] = (prob, sol, assemble_leq_flux(sol))
        return out[key]
    return get


@pytest.mark.parametrize("pair", ["P20", "P2B", "P31", "SV"])
def test_residual_forms_agree(pair):
    _, sol = cached_solution("smooth_square", pair, 1.0, 2)
    k = sol.pair.order
    a = LocalData(sol, None, k, form="ibp")
    b = LocalData(sol, None, k, form="direct")
    scale = np.abs(a.rv).max()
    np.testing.assert_allclose(b.rv, a.rv, atol=1e-9 * scale)
    np.testing.assert_allclose(b.rh, a.rh, atol=1e-9 * scale)
    v = sol.mesh.n_vertices // 2
    ra, ha, _ = assemble_local_residual(vertex_patch(sol.mesh, v), sol, form="ibp")
    rb, hb, _ = assemble_local_residual(vertex_patch(sol.mesh, v), sol, form="direct")
    np.testing.assert_allclose(rb, ra, atol=1e-9 * scale)


@pytest.mark.parametrize("problem, pair", [("smooth_square", "P2B"), ("smooth_square", "SV"),
                                           ("lshape", "P31"), ("lshape", "SV")])
def test_residual_vanishes_on_constant_pairs(problem, pair, rng):
    _, sol = cached_solution(problem, pair, 1.0, 2)
    data = LocalData(sol, None, sol.pair.order)
    for v in range(sol.mesh.n_vertices):
        patch = vertex_patch(sol.mesh, v)
        if patch.is_boundary_vertex:
            continue
        r_u, r_h, lay = assemble_local_residual(patch, sol, data=data)
        b = np.concatenate([r_u, r_h])
        c = rng.standard_normal(2)
        z = constant_pair(data, lay, c)[:lay.n_rt + lay.n_hat]
        assert abs(b @ z) <= 1e-9 * np.abs(b).sum() * np.abs(z).max()


@pytest.mark.parametrize("problem, pair", [("smooth_square", "P20"), ("smooth_square", "SV"),
                                           ("lshape", "P2B"), ("lshape", "SV")])
def test_local_stress_has_zero_nt_trace_on_patch_boundary(problem, pair):
    _, sol = cached_solution(problem, pair, 1.0, 2)
    data = LocalData(sol, None, sol.pair.order)
    sols = [solve_local_patch(vertex_patch(sol.mesh, v), sol, data=data)
            for v in range(sol.mesh.n_vertices)]
    scale = max(np.sqrt(patch_norm_squared(data, s)) for s in sols)
    assert scale > 0
    assert max(patch_boundary_nt(data, s) for s in sols) <= 1e-9 * scale


def test_zero_load_gives_zero_local_solutions():
    mesh = working_mesh(unit_square_mesh(2), "P2B")
    sol = solve_stokes(StokesProblem(mesh, 1.0, lambda x: np.zeros_like(x), curl_f_zero=True), "P2B")
    flux = assemble_leq_flux(sol)
    assert np.abs(flux.coeffs).max() == 0.0
    assert np.all(flux.extra["patch_norms"] == 0.0)


def test_patch_layout_sizes():
    _, sol = cached_solution("smooth_square", "P2B", 1.0, 2)
    data = LocalData(sol, None, 2)
    mesh = sol.mesh
    for v in range(mesh.n_vertices):
        patch = vertex_patch(mesh, v)
        lay = patch_layout(data, patch)
        m = len(patch.elements)
        nf = len(patch.facets) - (np.count_nonzero(mesh.boundary_facet_mask[patch.facets])
                                  if patch.is_boundary_vertex else 0)
        assert lay.n_hat == 3 * nf
        assert lay.n_rt == 3 * nf + m * data.spaces.u.n_int
        assert lay.n_constraints == (0 if patch.is_boundary_vertex else 2)


@pytest.mark.parametrize("problem, pair", [(p, q) for p in ("smooth_square", "lshape")
                                           for q in ("P20", "P2B", "P31", "SV")])
def test_leq_flux_is_admissible(leq, problem, pair):
    prob, sol, flux = leq(problem, pair)
    assert nt_jump_residual(flux) <= 1e-8
    assert verify_discrete_equilibration(flux, prob.f) <= 1e-8


@pytest.mark.parametrize("problem, pair", [("smooth_square", "P20"), ("smooth_square", "SV"),
                                           ("lshape", "P2B"), ("lshape", "SV")])
def test_local_efficiency_proxy_bounded(leq, problem, pair):
    prob, sol, flux = leq(problem, pair)
    ratio = local_efficiency_ratio(flux, sol, prob.grad_u, prob.laplace_u)
    assert 0 < ratio <= 50


def test_leq_flux_scales_with_viscosity(leq):
    _, _, a = leq("smooth_square", "SV", 1.0)
    _, _, b = leq("smooth_square", "SV", 1e-4)
    np.testing.assert_allclose(b.coeffs / 1e-4, a.coeffs, atol=1e-7 * np.abs(a.coeffs).max())


def test_threads_do_not_change_the_flux(leq):
    _, sol, flux = leq("smooth_square", "P2B")
    one = assemble_leq_flux(sol, threads=1)
    two = assemble_leq_flux(sol, threads=3)
    np.testing.assert_array_equal(one.coeffs, two.coeffs)
    np.testing.assert_array_equal(one.coeffs, flux.coeffs)


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.setenv("STOKES_EQ_THREADS", "3")
    assert max_threads() == 3
    monkeypatch.delenv("STOKES_EQ_THREADS")
    assert max_threads() >= 1
    for bad in ("0", "two", "-1"):
        monkeypatch.setenv("STOKES_EQ_THREADS", bad)
        with pytest.raises(ValueError):
            max_threads()
