import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stokes_eq.mesh import barycentric_refine, refine_uniform, unit_square_mesh, l_shape_mesh
from stokes_eq.problems import get_problem
from stokes_eq.stokes import get_pair, solve_stokes

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def working_mesh(macro, pair):
    return barycentric_refine(macro) if get_pair(pair).barycentric else macro


@functools.lru_cache(maxsize=None)
def cached_solution(problem, pair, nu=1.0, mesh_n=2, bisections=0):
    """Primal solution of a benchmark on a (refined) initial mesh."""
    prob = get_problem(problem, nu)
    macro = prob.mesh(mesh_n)
    if bisections:
        macro = refine_uniform(macro, bisections)
    return prob, solve_stokes(prob.stokes_problem(working_mesh(macro, pair)), pair)


@pytest.fixture(scope="session")
def solution():
    return cached_solution


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TEST_MESHES = {
    "square2": lambda: unit_square_mesh(2),
    "square3_bary": lambda: barycentric_refine(unit_square_mesh(3)),
    "lshape1_nvb": lambda: refine_uniform(l_shape_mesh(1), 2),
}
