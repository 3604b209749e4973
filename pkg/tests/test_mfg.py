import numpy as np
import pytest

from mfgsolve.grid import Grid, integrate
from mfgsolve.mfg import (
    SolverConfig,
    gaussian_density,
    minimizer_verification,
    random_feasible_pair,
    solve_mfg,
)
from mfgsolve.model import CouplingSpec, HamiltonianSpec, ModelParams, PotentialSpec

HAM = HamiltonianSpec(C_H=0.5, gamma=2.0)


def _lq_model(eps=0.25):
    # H = p^2/2, V = x^2/2, no coupling: u = x^2/2, lam = eps,
    # m = Gaussian with variance eps
    return ModelParams(
        HAM, CouplingSpec(C_f=0.0, alpha=1.0),
        PotentialSpec(form="power", b=2.0, prefactor=0.5), dim=1, M=1.0, epsilon=eps,
    )


def _coupled_model(eps=0.25):
    return ModelParams(
        HAM, CouplingSpec(C_f=1.0, alpha=1.0),
        PotentialSpec(form="power", b=2.0, prefactor=1.0), dim=1, M=1.0, epsilon=eps,
    )


def test_lq_closed_form():
    g = Grid(1, 8.0, 401)
    sol = solve_mfg(_lq_model(), g, SolverConfig())
    assert sol.lam == pytest.approx(0.25, abs=1e-6)
    x = g.axis_coords()
    exact = np.exp(-(x**2) / 0.5)
    exact /= integrate(exact, g)
    assert np.abs(sol.m.values - exact).max() / exact.max() < 1e-6
    assert sol.converged


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(theta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)


def test_coupled_solve_certificates():
    g = Grid(1, 8.0, 801)
    sol = solve_mfg(_coupled_model(), g, SolverConfig())
    assert sol.converged
    assert abs(sol.duality_gap) / abs(sol.lam) < 2e-3
    assert sol.optimality_residual < 1e-10
    assert integrate(sol.m) == pytest.approx(1.0, abs=1e-12)
    assert sol.m.values.min() >= 0.0
    assert sol.u.values.min() == 0.0


def test_determinism():
    g = Grid(1, 8.0, 401)
    a = solve_mfg(_coupled_model(), g, SolverConfig())
    b = solve_mfg(_coupled_model(), g, SolverConfig())
    assert np.array_equal(a.m.values, b.m.values)
    assert a.lam == b.lam


def test_mass_conservation_under_coupling_strength():
    g = Grid(1, 8.0, 401)
    for C_f in (0.5, 2.0):
        model = ModelParams(
            HAM, CouplingSpec(C_f=C_f, alpha=1.0), PotentialSpec(form="power", b=2.0),
            dim=1, M=2.0, epsilon=0.25,
        )
        sol = solve_mfg(model, g, SolverConfig())
        assert integrate(sol.m) == pytest.approx(2.0, abs=2e-12)


def test_random_feasible_pair_is_feasible():
    g = Grid(1, 6.0, 301)
    model = _coupled_model()
    rng = np.random.default_rng(11)
    for _ in range(5):
        pair = random_feasible_pair(model, g, rng)
        assert integrate(pair.m) == pytest.approx(model.M, rel=1e-8)
        assert pair.m.values.min() >= 0.0


def test_minimizer_verification_passes():
    g = Grid(1, 8.0, 801)
    model = _coupled_model()
    sol = solve_mfg(model, g, SolverConfig())
    out = minimizer_verification(sol, model, g, trials=20, seed=5)
    assert out["passed"]
    assert out["failures"] == 0
    assert out["min_margin"] > -out["tolerance"]


def test_warm_start_reaches_same_solution():
    g = Grid(1, 8.0, 401)
    model = _coupled_model()
    ref = solve_mfg(model, g, SolverConfig())
    m0 = gaussian_density(g, 1.0, center=(1.0,), sigma=0.3)
    sol = solve_mfg(model, g, SolverConfig(), m0=m0)
    assert sol.lam == pytest.approx(ref.lam, abs=1e-6)
