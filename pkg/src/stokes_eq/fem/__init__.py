"""Finite element core: quadrature, spaces, assembly and linear algebra."""

from .assembly import assemble, load_vector, mass_matrix, stiffness_matrix
from .interpolation import (ElementFunction, as_element_function, interpolate_bdm,
                            interpolate_rt, l2_project_elementwise)
from .linalg import SingularSystemError, SparseSystem, solve_linear
from .quadrature import QuadratureRule, UnsupportedDegreeError, make_quadrature
from .spaces import (BDMSpace, DGSpace, FacetTangentialSpace, FEFunction, LagrangeSpace,
                     RTSpace, TraceFreeSpace, UnsupportedSpaceError, build_space)

__all__ = [
    "assemble", "load_vector", "mass_matrix", "stiffness_matrix", "ElementFunction",
    "as_element_function", "interpolate_bdm", "interpolate_rt", "l2_project_elementwise",
    "SingularSystemError", "SparseSystem", "solve_linear", "QuadratureRule",
    "UnsupportedDegreeError", "make_quadrature", "BDMSpace", "DGSpace",
    "FacetTangentialSpace", "FEFunction", "LagrangeSpace", "RTSpace", "TraceFreeSpace",
    "UnsupportedSpaceError", "build_space",
]
