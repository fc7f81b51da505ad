"""Pressure-robust Stokes discretizations with equilibrated-flux error bounds."""

from .amr import AmrError, ConvergenceHistory, amr_loop, efficiency_index, estimate
from .classical import eta_ceq, solve_ceq
from .estimate import EquilibratedFlux, EstimatorConfig, EstimatorReport, compute_eta
from .estimator import EquilibratedErrorEstimator, StokesSolver
from .global_eq import solve_geq
from .local_eq import assemble_leq_flux
from .mesh import barycentric_refine, l_shape_mesh, refine_marked, refine_uniform, unit_square_mesh
from .problems import get_problem
from .stokes import PAIRS, get_pair, h1_error, solve_stokes

__version__ = "0.1.0"

__all__ = [
    "AmrError", "ConvergenceHistory", "EquilibratedErrorEstimator", "EquilibratedFlux",
    "EstimatorConfig", "EstimatorReport", "PAIRS", "StokesSolver", "amr_loop",
    "assemble_leq_flux", "barycentric_refine", "compute_eta", "efficiency_index", "estimate",
    "eta_ceq", "get_pair", "get_problem", "h1_error", "l_shape_mesh", "refine_marked",
    "refine_uniform", "solve_ceq", "solve_geq", "solve_stokes", "unit_square_mesh",
]
