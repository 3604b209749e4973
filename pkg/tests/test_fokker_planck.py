import numpy as np
import pytest

from mfgsolve.fokker_planck import FPProblem, FPSolution, flux_operator, solve_stationary_fp
from mfgsolve.grid import Grid, VectorField, integrate


def _linear_drift_problem(grid, eps, M=1.0, scheme="scharfetter_gummel"):
    # eps m'' + (x m)' = 0  =>  m proportional to exp(-x^2 / (2 eps))
    drift = VectorField(grid, grid.coords())
    return FPProblem(drift=drift, epsilon=eps, M=M, scheme=scheme)


def test_gaussian_equilibrium():
    g = Grid(1, 4.0, 801)
    sol = solve_stationary_fp(_linear_drift_problem(g, 0.25))
    x = g.axis_coords()
    exact = np.exp(-(x**2) / 0.5)
    exact /= integrate(exact, g)
    assert np.abs(sol.m.values - exact).max() / exact.max() < 1e-5


def test_mass_exact_and_linear_in_M():
    g = Grid(1, 4.0, 401)
    s1 = solve_stationary_fp(_linear_drift_problem(g, 0.25, M=1.0))
    s3 = solve_stationary_fp(_linear_drift_problem(g, 0.25, M=3.0))
    assert integrate(s1.m) == pytest.approx(1.0, abs=1e-13)
    assert integrate(s3.m) == pytest.approx(3.0, abs=3e-13)
    assert np.allclose(s3.m.values, 3.0 * s1.m.values, rtol=1e-12)


def test_positivity():
    g = Grid(1, 4.0, 401)
    sol = solve_stationary_fp(_linear_drift_problem(g, 0.25))
    assert sol.m.values.min() >= 0.0
    assert sol.m.values[1:-1].min() > 0.0


def test_solution_annihilated_by_flux_operator():
    g = Grid(1, 4.0, 401)
    prob = _linear_drift_problem(g, 0.25)
    sol = solve_stationary_fp(prob)
    A = flux_operator(g, prob.drift, prob.epsilon, prob.scheme)
    res = np.abs(A @ sol.m.values.ravel()).max()
    assert res <= 1e-10 * np.abs(A).max()


def test_conservation_column_sums():
    # interior columns of the weighted flux operator sum to zero: no mass is
    # created or destroyed away from the boundary closure
    g = Grid(1, 2.0, 101)
    prob = _linear_drift_problem(g, 0.5)
    A = flux_operator(g, prob.drift, prob.epsilon, prob.scheme)
    w = g.quadrature_weights().ravel()
    col = np.asarray((w[:, None] * A.toarray()).sum(axis=0)).ravel()
    assert np.abs(col).max() < 1e-10 * np.abs(A).max()


def test_upwind_scheme_agrees_on_fine_grid():
    g = Grid(1, 4.0, 3201)
    sg = solve_stationary_fp(_linear_drift_problem(g, 0.25, scheme="scharfetter_gummel"))
    up = solve_stationary_fp(_linear_drift_problem(g, 0.25, scheme="upwind"))
    assert np.abs(sg.m.values - up.m.values).max() / sg.m.values.max() < 5e-3


def test_2d_gaussian_equilibrium():
    g = Grid(2, 3.0, 61)
    drift = VectorField(g, g.coords())
    sol = solve_stationary_fp(FPProblem(drift=drift, epsilon=0.5, M=1.0))
    X, Y = g.coords()
    exact = np.exp(-(X**2 + Y**2) / 1.0)
    exact /= integrate(exact, g)
    assert np.abs(sol.m.values - exact).max() / exact.max() < 1e-3


def test_problem_validation():
    g = Grid(1, 1.0, 11)
    drift = VectorField(g, g.coords())
    with pytest.raises(ValueError):
        FPProblem(drift=drift, epsilon=0.0, M=1.0)
    with pytest.raises(ValueError):
        FPProblem(drift=drift, epsilon=1.0, M=1.0, scheme="bogus")
