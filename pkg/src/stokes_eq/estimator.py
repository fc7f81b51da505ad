"""Estimator-style wrappers for the primal solver and the error bounds.

The objects follow the scikit-learn conventions for parameters
(``get_params``/``set_params``/``clone``) and fitted attributes (trailing
underscore).  ``fit`` takes a problem or a discrete solution instead of a
feature matrix, so they are not meant for scikit-learn pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .amr import efficiency_index, estimate
from .estimate import EstimatorConfig
from .stokes import StokesSolution, get_pair, h1_error, solve_stokes


def _check_fitted(obj, attr):
    if not hasattr(obj, attr):
        raise NotFittedError(f"{type(obj).__name__} is not fitted yet; call fit first")


class StokesSolver(BaseEstimator):
    """Primal pressure-robust Stokes solve.

    Parameters
    ----------
    pair : {"P20", "P2B", "P31", "SV"}
    quad_degree : int, optional
        Quadrature degree for the load.
    """

    def __init__(self, pair="SV", quad_degree=None):
        self.pair = pair
        self.quad_degree = quad_degree

    def fit(self, problem, y=None):
        """Solve ``problem`` (a :class:`StokesProblem`); sets ``solution_``."""
        get_pair(self.pair)
        self.solution_ = solve_stokes(problem, self.pair, self.quad_degree)
        self.n_dofs_ = self.solution_.ndof
        return self

    def predict(self, x, elems):
        """Discrete velocity at points ``x`` (ne, nq, 2) of elements ``elems``."""
        _check_fitted(self, "solution_")
        return self.solution_.velocity(np.asarray(elems), np.asarray(x, dtype=float))


class EquilibratedErrorEstimator(BaseEstimator):
    """Guaranteed velocity error bound from an equilibrated flux.

    Parameters
    ----------
    method : {"GEQ", "LEQ", "CEQ"}
    c0, c1, c2 : float
        Constants of the bound.

    Attributes
    ----------
    report_ : EstimatorReport
    eta_ : float
    indicators_ : ndarray
    """

    def __init__(self, method="GEQ", c0=0.3, c1=1.0, c2=1.0):
        self.method = method
        self.c0 = c0
        self.c1 = c1
        self.c2 = c2

    def fit(self, solution, y=None):
        """Evaluate the bound for a :class:`StokesSolution`."""
        if not isinstance(solution, StokesSolution):
            raise TypeError("fit expects a StokesSolution")
        config = EstimatorConfig(c0=self.c0, c1=self.c1, c2=self.c2)
        self.report_ = estimate(solution, str(self.method), config)
        self.eta_ = self.report_.eta
        self.indicators_ = self.report_.indicators
        self.solution_ = solution
        return self

    def predict(self, solution=None):
        """Per-element indicators (of ``solution`` if given, else the fitted one)."""
        if solution is not None:
            return self.fit(solution).indicators_
        _check_fitted(self, "report_")
        return self.indicators_

    def score(self, grad_exact, y=None, quad_degree=12, singular_points=()):
        """Efficiency index ``eta / ||grad(u - u_h)||`` for the exact gradient."""
        _check_fitted(self, "report_")
        err = h1_error(self.solution_.velocity, grad_exact, quad_degree, singular_points)
        return efficiency_index(self.eta_, err)
