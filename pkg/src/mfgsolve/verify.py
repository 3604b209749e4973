"""Standalone structural invariant suite: cheap, deterministic checks of the
discrete calculus, the convex-duality layer, and the solver contracts."""

from __future__ import annotations

import numpy as np

from .energy import kinetic_density
from .fokker_planck import FPProblem, flux_operator, solve_stationary_fp
from .grid import Grid, ScalarField, VectorField, divergence, gradient, integrate
from .mfg import SolverConfig, random_feasible_pair
from .model import (
    HamiltonianSpec,
    ModelParams,
    coupling_F,
    hamiltonian,
    lagrangian,
)


def legendre_sup_oracle(spec: HamiltonianSpec, q: np.ndarray, p_max: float = 50.0, n: int = 4001) -> float:
    """Brute-force sup_p (p.q - H(p)) along the ray p || q (the maximizer
    direction), refined by golden-section search: the objective is concave in
    the ray parameter, so the polish converges to the true supremum."""
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        return 0.0

    def g(t):
        return t * qn - spec.C_H * t**spec.gamma

    ts = np.linspace(0.0, p_max, n)
    k = int(np.argmax(g(ts)))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, n - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    for _ in range(200):
        if g(c) > g(d):
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    return float(max(g(0.5 * (a + b)), g(lo), g(hi)))


def _check_legendre(rng) -> dict:
    worst = 0.0
    for _ in range(12):
        gamma = float(rng.uniform(1.3, 3.5))
        C_H = float(rng.uniform(0.2, 3.0))
        spec = HamiltonianSpec(C_H=C_H, gamma=gamma)
        q = rng.normal(size=2)
        exact = float(lagrangian(spec, q))
        brute = legendre_sup_oracle(spec, q)
        worst = max(worst, abs(brute - exact) / max(abs(exact), 1e-30))
    return {"value": worst, "passed": worst <= 1e-6}


def _check_fenchel(rng, samples: int) -> dict:
    spec = HamiltonianSpec(C_H=0.7, gamma=2.5)
    p = rng.normal(scale=2.0, size=(2, samples))
    q = rng.normal(scale=2.0, size=(2, samples))
    slack = hamiltonian(spec, p) + lagrangian(spec, q) - (p * q).sum(axis=0)
    worst = float(slack.min())
    # equality at q = grad H(p)
    from .model import grad_hamiltonian

    qstar = grad_hamiltonian(spec, p[:, :200])
    eq_gap = np.abs(
        hamiltonian(spec, p[:, :200]) + lagrangian(spec, qstar) - (p[:, :200] * qstar).sum(axis=0)
    ).max()
    passed = worst >= -1e-10 and eq_gap <= 1e-8 * max(1.0, float(hamiltonian(spec, p).max()))
    return {"value": worst, "equality_gap": float(eq_gap), "passed": bool(passed)}


def _check_adjointness(rng) -> dict:
    worst = 0.0
    for dim in (1, 2):
        grid = Grid(dim, 1.0, 41 if dim == 2 else 201)
        x = grid.coords()
        f = ScalarField(grid, np.sin(1.7 * x.sum(axis=0)) + 0.3 * (x**2).sum(axis=0))
        bump = np.exp(-((x / 0.45) ** 2).sum(axis=0) * 4.0)
        bump[grid.radius() > 0.85 * grid.half_width] = 0.0
        g = ScalarField(grid, bump)
        gf = gradient(f, "central")
        lhs = integrate(divergence(gf).values * g.values, grid)
        rhs = -integrate((gf.components * gradient(g, "central").components).sum(axis=0), grid)
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return {"value": worst, "passed": worst <= 1e-10}


def _fp_case():
    # half width 4: the equilibrium tail exp(-x^2/(2 eps)) stays well above the
    # underflow threshold, so strict interior positivity is a meaningful check
    grid = Grid(1, 4.0, 401)
    x = grid.coords()
    drift = VectorField(grid, x)
    return grid, solve_stationary_fp(FPProblem(drift=drift, epsilon=0.25, M=1.0)), drift


def _check_fp_mass_positivity() -> dict:
    grid, sol, _ = _fp_case()
    mass_err = abs(integrate(sol.m) - 1.0)
    pos = float(sol.m.values[1:-1].min())
    return {"mass_error": mass_err, "min_interior": pos, "passed": mass_err <= 1e-12 and pos > 0.0}


def _check_fp_constraint() -> dict:
    grid, sol, drift = _fp_case()
    A = flux_operator(grid, drift, 0.25, "scharfetter_gummel")
    res = float(np.abs(A @ sol.m.values.ravel()).max())
    scale = float(np.abs(A).max() * sol.m.values.max())
    return {"value": res / scale, "passed": res <= 1e-10 * scale}


def _check_energy_scaling(rng, model: ModelParams) -> dict:
    grid = Grid(1, 6.0, 301)
    pair = random_feasible_pair(model, grid, rng)
    c = 1.7
    kin1 = integrate(kinetic_density(pair.m.values, pair.w.components, model.hamiltonian), grid)
    kin_c = integrate(
        kinetic_density(c * pair.m.values, c * pair.w.components, model.hamiltonian), grid
    )
    coup1 = integrate(np.asarray(coupling_F(model.coupling, pair.m.values)), grid)
    coup_c = integrate(np.asarray(coupling_F(model.coupling, c * pair.m.values)), grid)
    e_kin = abs(kin_c - c * kin1) / max(abs(kin1), 1e-30)
    e_coup = abs(coup_c - c ** (model.coupling.alpha + 1.0) * coup1) / max(abs(coup1), 1e-30)
    worst = max(e_kin, e_coup)
    return {"value": worst, "passed": worst <= 1e-12}


def _check_subadditivity(model: ModelParams, fractions) -> dict:
    from .energy import rescaled_minimal_energy

    grid = Grid(1, 160.0, 1601)
    cfg = SolverConfig(theta=0.5, tol=1e-8, recenter=True)
    cache: dict[float, float] = {}

    def e_tilde(mass: float) -> float:
        if mass not in cache:
            cache[mass] = rescaled_minimal_energy(model, mass, grid, cfg)
        return cache[mass]

    gaps = {}
    ok = True
    for frac in fractions:
        a = frac * model.M
        gap = e_tilde(a) + e_tilde(model.M - a) - e_tilde(model.M)
        gaps[frac] = gap
        ok = ok and gap >= -1e-6
    small = 1e-3 * model.M
    gap_end = e_tilde(small) + e_tilde(model.M - small) - e_tilde(model.M)
    gaps["endpoint"] = gap_end
    ok = ok and abs(gap_end) <= 1e-3
    return {"gaps": gaps, "passed": bool(ok)}


def run_verify(seed: int = 0, fenchel_samples: int = 10000, subadditivity_fractions=(0.25, 0.5, 0.75)) -> dict:
    """Run every structural check; returns per-check reports plus pass counts."""
    from .model import CouplingSpec, PotentialSpec

    rng = np.random.default_rng(seed)
    model = ModelParams(
        hamiltonian=HamiltonianSpec(C_H=0.5, gamma=2.0),
        coupling=CouplingSpec(C_f=1.0, alpha=1.0),
        potential=PotentialSpec(form="power", b=2.0),
        dim=1,
        M=1.0,
        epsilon=0.05,
    )
    checks = {
        "legendre_sup_oracle": _check_legendre(rng),
        "fenchel_inequality": _check_fenchel(rng, fenchel_samples),
        "discrete_adjointness": _check_adjointness(rng),
        "fp_mass_and_positivity": _check_fp_mass_positivity(),
        "fp_constraint_residual": _check_fp_constraint(),
        "energy_scaling": _check_energy_scaling(rng, model),
        "subadditivity": _check_subadditivity(model, subadditivity_fractions),
    }
    passed = sum(1 for c in checks.values() if c["passed"])
    return {"checks": checks, "passed": passed, "total": len(checks)}
