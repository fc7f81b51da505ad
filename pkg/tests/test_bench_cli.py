import math

import numpy as np
import pytest
import sympy as sp_

from stokes_eq import cli
from stokes_eq.amr import AmrError, ConvergenceHistory
from stokes_eq.problems import (LSHAPE_ALPHA, ManufacturedSolutionError, check_manufactured,
                                get_problem, lshape_exponent, manufactured_residual,
                                problem_lshape, problem_smooth_square, sample_points)

X, Y = sp_.symbols("x y")


def smooth_symbolic(nu):
    xi = X ** 2 * (1 - X) ** 2 * Y ** 2 * (1 - Y) ** 2
    u = sp_.Matrix([sp_.diff(xi, Y), -sp_.diff(xi, X)])
    p = X ** 5 + Y ** 5 - sp_.Rational(1, 3)
    lap = u.applyfunc(lambda c: sp_.diff(c, X, 2) + sp_.diff(c, Y, 2))
    f = -nu * lap + sp_.Matrix([sp_.diff(p, X), sp_.diff(p, Y)])
    curl = sp_.diff(f[1], X) - sp_.diff(f[0], Y)
    return u, p, f, curl


@pytest.mark.parametrize("nu", [1.0, 1e-4])
def test_smooth_data_against_symbolic_oracle(nu):
    prob = problem_smooth_square(nu)
    u, p, f, curl = smooth_symbolic(sp_.Float(nu))
    pts = sample_points(prob, 30, seed=3)
    ev = lambda e: np.array([float(e.subs({X: a, Y: b})) for a, b in pts])
    np.testing.assert_allclose(prob.u(pts), np.stack([ev(u[0]), ev(u[1])], -1), atol=1e-14)
    np.testing.assert_allclose(prob.p(pts), ev(p), atol=1e-14)
    fs = np.stack([ev(f[0]), ev(f[1])], -1)
    np.testing.assert_allclose(prob.f(pts), fs, rtol=1e-12, atol=1e-12 * np.abs(fs).max())
    cs = ev(curl)
    np.testing.assert_allclose(prob.curl_f(pts), cs, rtol=1e-12, atol=1e-12 * np.abs(cs).max())
    J = u.jacobian([X, Y])
    g = np.stack([np.stack([ev(J[i, j]) for j in range(2)], -1) for i in range(2)], -2)
    np.testing.assert_allclose(prob.grad_u(pts), g, atol=1e-14)


def test_smooth_velocity_values():
    prob = problem_smooth_square()
    np.testing.assert_allclose(prob.u(np.array([0.5, 0.5])), [0.0, 0.0], atol=1e-16)
    edge = np.array([[0.0, 0.3], [1.0, 0.7], [0.2, 0.0], [0.6, 1.0]])
    assert np.abs(prob.u(edge)).max() == 0.0


def test_lshape_exponent():
    a = lshape_exponent()
    assert np.sin(a * 1.5 * np.pi) + a * np.sin(1.5 * np.pi) == pytest.approx(0.0, abs=1e-14)
    assert 0.544 < a < 0.545
    assert abs(a - LSHAPE_ALPHA) < 1e-7


@pytest.mark.parametrize("alpha, tol", [(None, 1e-5), ("exact", 1e-10)])
def test_lshape_no_slip_on_the_legs(alpha, tol):
    prob = problem_lshape(1.0) if alpha is None else problem_lshape(1.0, lshape_exponent())
    t = np.linspace(0.01, 1.0, 50)
    legs = np.concatenate([np.stack([t, 0 * t], -1), np.stack([0 * t, -t], -1)])
    assert np.abs(prob.u(legs)).max() <= tol
    # away from the legs the flow does not vanish
    assert np.abs(prob.u(np.array([[-0.5, 0.5]]))).max() > 0.1


def test_lshape_force_is_a_gradient():
    prob = get_problem("lshape")
    assert prob.curl_f_zero and prob.curl_f is None
    pts = sample_points(prob, 40, seed=1)
    h = 1e-5
    e = np.eye(2) * h
    d = lambda fn, i: (fn(pts + e[i]) - fn(pts - e[i])) / (2 * h)
    curl = d(lambda x: prob.f(x)[:, 1], 0) - d(lambda x: prob.f(x)[:, 0], 1)
    assert np.abs(curl).max() <= 1e-6


def test_lshape_gradient_matches_finite_differences():
    prob = get_problem("lshape")
    pts = sample_points(prob, 40, seed=2)
    h = 1e-6
    for j in range(2):
        step = np.zeros(2)
        step[j] = h
        fd = (prob.u(pts + step) - prob.u(pts - step)) / (2 * h)
        np.testing.assert_allclose(prob.grad_u(pts)[..., j], fd, atol=1e-6)


def test_lshape_pressure_scales_with_viscosity():
    pts = sample_points(get_problem("lshape"), 10)
    a, b = problem_lshape(1.0), problem_lshape(1e-4)
    np.testing.assert_allclose(b.p0(pts), 1e-4 * a.p0(pts), rtol=1e-13)
    np.testing.assert_allclose(b.f(pts), a.f(pts))


@pytest.mark.parametrize("name", ["smooth_square", "lshape"])
@pytest.mark.parametrize("nu", [1.0, 1e-4])
def test_manufactured_residuals_small(name, nu):
    mom, div = manufactured_residual(get_problem(name, nu))
    assert mom <= 1e-6 and div <= 1e-6


def test_manufactured_check_detects_inconsistency():
    prob = problem_smooth_square()
    prob.f = lambda x: 2 * problem_smooth_square().f(x)
    with pytest.raises(ManufacturedSolutionError):
        check_manufactured(prob)


def test_sample_points_inside_lshape():
    pts = sample_points(get_problem("lshape"), 200, margin=0.05)
    assert pts.shape == (200, 2)
    assert not np.any((pts[:, 0] > -0.05) & (pts[:, 1] < 0.05))
    assert np.abs(pts).max() < 0.95


def test_unknown_problem():
    with pytest.raises(ValueError):
        get_problem("cube")


# -- command line ------------------------------------------------------------

def test_cli_uniform_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "h.csv"
    code = cli.main(["--problem", "smooth_square", "--pair", "p2b", "--estimator", "geq",
                     "--levels", "2", "--mesh-n", "2", "--out", str(out)])
    assert code == 0
    hist = ConvergenceHistory.read_csv(out)
    assert len(hist) == 2
    assert np.all(hist.column("efficiency") >= 1.0)
    assert "final efficiency index" in capsys.readouterr().out


def test_cli_csv_to_stdout(capsys):
    code = cli.main(["--pair", "p20", "--levels", "1", "--mesh-n", "1"])
    assert code == 0
    cap = capsys.readouterr()
    assert cap.out.splitlines()[0].startswith("level,ndof,")
    assert "final efficiency index" in cap.err


def test_cli_lshape_p2b_leq_adaptive(tmp_path):
    out = tmp_path / "l.csv"
    code = cli.main(["--problem", "lshape", "--pair", "p2b", "--estimator", "leq", "--adaptive",
                     "--levels", "3", "--nu", "1e-4", "--out", str(out)])
    assert code == 0
    hist = ConvergenceHistory.read_csv(out)
    assert np.all(hist.column("eta_f") == 0.0)
    assert np.all(hist.column("eta_div") > 0.0)
    assert np.all(hist.column("eta_total") >= hist.column("err_h1"))


@pytest.mark.parametrize("argv", [["--nu", "0"], ["--nu", "-1"], ["--levels", "0"],
                                  ["--pair", "th"], ["--estimator", "zz"], ["--c0", "nan"],
                                  ["--uniform", "--adaptive"], ["--problem", "cube"]])
def test_cli_rejects_bad_arguments(argv, capsys):
    assert cli.main(argv) == 2


def test_cli_help_exits_cleanly(capsys):
    assert cli.main(["--help"]) == 0
    assert "--estimator" in capsys.readouterr().out


def test_cli_unwritable_output(tmp_path):
    assert cli.main(["--levels", "1", "--mesh-n", "1", "--out",
                     str(tmp_path / "missing" / "h.csv")]) == 2


def test_cli_solver_failure_exit_code(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise AmrError("factorization failed", 1)
    monkeypatch.setattr(cli, "amr_loop", boom)
    assert cli.main(["--levels", "1"]) == 3
    assert "level 1" in capsys.readouterr().err


def test_default_mesh_sizes():
    args = cli.build_parser().parse_args([])
    assert (args.problem, args.pair, args.estimator, args.uniform) == \
        ("smooth_square", "sv", "geq", True)
    assert cli.DEFAULT_MESH_N == {"smooth_square": 4, "lshape": 2}
    assert math.isclose(args.c0, 0.3)
