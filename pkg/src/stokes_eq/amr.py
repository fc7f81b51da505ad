"""Adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE.

For Scott-Vogelius the loop carries two meshes: the macro mesh, which is
refined by newest-vertex bisection, and its barycentric refinement, on
which the pair is solved and the estimator evaluated.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .classical import eta_ceq, solve_ceq
from .estimate import EstimatorConfig, compute_eta
from .global_eq import solve_geq
from .local_eq import assemble_leq_flux
from .mesh import barycentric_refine, refine_marked, refine_uniform, validate_mesh
from .stokes import get_pair, h1_error, solve_stokes

ESTIMATORS = ("CEQ", "GEQ", "LEQ")
CSV_FIELDS = ("level", "ndof", "h_max", "err_h1", "eta_total", "eta_f", "eta_sigma", "eta_div",
              "efficiency", "wall_time_s")
UNIFORM_BISECTIONS = 2


class AmrError(RuntimeError):
    """A stage of the adaptive loop failed; ``level`` gives the context."""

    def __init__(self, message, level):
        super().__init__(f"level {level}: {message}")
        self.level = level


def mark_elements(etas, theta=0.25):
    """Indices ``T`` with ``eta_T >= theta * max eta``.

    The maximum is always marked; all-zero indicators mark everything.
    """
    etas = np.asarray(etas, dtype=float).ravel()
    if etas.size == 0:
        raise ValueError("no indicators to mark")
    if not np.all(np.isfinite(etas)):
        raise ValueError("indicators must be finite")
    return np.flatnonzero(etas >= theta * etas.max())


def mark_sv_macro(etas, children, theta=0.25):
    """Macro elements whose children's mean indicator reaches ``theta * max eta``.

    ``children`` (n_macro, 3) lists the barycentric children of each macro
    element; the maximum runs over all barycentric elements.
    """
    etas = np.asarray(etas, dtype=float).ravel()
    children = np.asarray(children)
    if etas.size == 0:
        raise ValueError("no indicators to mark")
    mean = etas[children].mean(axis=1)
    return np.flatnonzero(mean >= theta * etas.max())


def efficiency_index(eta, err):
    """``eta / err``; NaN when the error is zero or unknown."""
    if err is None or not np.isfinite(err) or err == 0.0:
        return math.nan
    return float(eta) / float(err)


@dataclass
class LevelRecord:
    level: int
    ndof: int
    h_max: float
    err_h1: float
    eta_total: float
    eta_f: float
    eta_sigma: float
    eta_div: float
    efficiency: float
    wall_time_s: float


@dataclass
class ConvergenceHistory:
    """Rows of a convergence study, one per level."""

    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path_or_file):
        """Write the CSV table (header plus one line per level, 17 significant digits)."""
        if hasattr(path_or_file, "write"):
            _write_rows(path_or_file, self.rows)
        else:
            with open(path_or_file, "w", newline="") as fh:
                _write_rows(fh, self.rows)

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_FIELDS:
                raise ValueError(f"unexpected CSV header {reader.fieldnames}")
            for r in reader:
                vals = {k: float(v) for k, v in r.items()}
                vals["level"] = int(vals["level"])
                vals["ndof"] = int(vals["ndof"])
                out.append(LevelRecord(**vals))
        return out


def format_float(x):
    return "nan" if not np.isfinite(x) else format(float(x), ".17g")


def _write_rows(fh, rows):
    fh.write(",".join(CSV_FIELDS) + "\n")
    for r in rows:
        d = asdict(r)
        fh.write(",".join(str(d[k]) if k in ("level", "ndof") else format_float(d[k])
                          for k in CSV_FIELDS) + "\n")
        fh.flush()


@dataclass
class AmrState:
    """Meshes of the current level; ``mesh`` is the working mesh of the solver."""

    macro: object
    mesh: object
    level: int
    history: ConvergenceHistory


def working_mesh(macro, pair):
    return barycentric_refine(macro) if get_pair(pair).barycentric else macro


def estimate(sol, estimator, config=None):
    """Estimator report of ``sol`` for ``estimator`` in {CEQ, GEQ, LEQ}.

    The flux behind the bound is kept in ``report.extra["flux"]``.
    """
    estimator = estimator.upper()
    config = config or EstimatorConfig()
    if estimator == "CEQ":
        flux = solve_ceq(sol)
        report = eta_ceq(flux, sol, config)
    elif estimator == "GEQ":
        flux = solve_geq(sol)
        report = compute_eta(flux, sol, config)
    elif estimator == "LEQ":
        flux = assemble_leq_flux(sol)
        report = compute_eta(flux, sol, config)
    else:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    report.extra["flux"] = flux
    return report


def _count_dofs(mesh, pair):
    return pair.velocity_space(mesh).n_dofs + pair.pressure_space(mesh).n_dofs


def _check_mesh(mesh, level):
    bad = validate_mesh(mesh)
    if bad:
        raise AmrError("mesh invariants violated: " + "; ".join(bad), level)


def amr_loop(problem, pair, estimator="GEQ", config=None, max_levels=30, max_ndof=200_000,
             uniform=False, mesh_n=4, theta=0.25, initial_mesh=None, callback=None):
    """Run a uniform or adaptive study.

    Parameters
    ----------
    problem : BenchmarkProblem
    pair : str or StokesPair
    estimator : {"CEQ", "GEQ", "LEQ"}
    config : EstimatorConfig, optional
    max_levels : int
        Number of solves at most.
    max_ndof : int
        A level whose system would exceed this size is not solved.
    uniform : bool
        Refine every element (two bisections per level) instead of marking.
    mesh_n : int
        Density of the initial macro mesh.
    theta : float
        Marking threshold relative to the largest indicator.
    initial_mesh : Mesh, optional
        Overrides ``problem.mesh(mesh_n)``.
    callback : callable, optional
        Called as ``callback(state, sol, report)`` after each level.

    Returns
    -------
    ConvergenceHistory
    """
    pair = get_pair(pair)
    estimator = estimator.upper()
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    config = config or EstimatorConfig(c0=problem.c0)
    macro = problem.mesh(mesh_n) if initial_mesh is None else initial_mesh
    history = ConvergenceHistory()
    state = AmrState(macro, working_mesh(macro, pair), 0, history)
    _check_mesh(state.mesh, 0)
    for level in range(max_levels):
        state.level = level
        if level > 0 and _count_dofs(state.mesh, pair) > max_ndof:
            break
        t0 = time.perf_counter()
        try:
            sol = solve_stokes(problem.stokes_problem(state.mesh), pair)
            report = estimate(sol, estimator, config)
        except Exception as exc:
            raise AmrError(f"{type(exc).__name__}: {exc}", level) from exc
        wall = time.perf_counter() - t0
        err = h1_error(sol.velocity, problem.grad_u, problem.error_quad_degree,
                       problem.singular_points) if problem.grad_u is not None else math.nan
        history.append(LevelRecord(level, int(sol.ndof), float(state.mesh.element_diameters.max()),
                                   float(err), report.eta, report.eta_f, report.eta_sigma,
                                   report.eta_div, efficiency_index(report.eta, err), wall))
        if callback is not None:
            callback(state, sol, report)
        if level + 1 == max_levels:
            break
        if uniform:
            macro = refine_uniform(state.macro, UNIFORM_BISECTIONS)
        elif pair.barycentric:
            macro = refine_marked(state.macro, mark_sv_macro(report.indicators,
                                                             state.mesh.children, theta))
        else:
            macro = refine_marked(state.macro, mark_elements(report.indicators, theta))
        state.macro = macro
        state.mesh = working_mesh(macro, pair)
        _check_mesh(state.macro, level + 1)
        _check_mesh(state.mesh, level + 1)
    return history
