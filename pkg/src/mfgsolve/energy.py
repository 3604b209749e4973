"""Variational core: constraint-set pairs, energy evaluation, lower bounds, subadditivity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, ScalarField, VectorField, divergence, gradient, integrate
from .model import (
    ModelParams,
    RescaledModel,
    coupling_F,
    coupling_f,
    lagrangian,
    mollified_F_functional,
    rescaled_potential_spec,
)



class InfeasiblePairError(ValueError):
    """A (m, w) pair violates mass or continuity constraints beyond tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class KPair:
    """Candidate element of the constraint set: density m >= 0 with prescribed mass,
    flux w coupled by the stationary continuity equation."""

    m: ScalarField
    w: VectorField
    epsilon: float
    M: float

    def __post_init__(self):
        vals = self.m.values
        if np.any(vals < -1e-12 * max(1.0, vals.max(initial=0.0))):
            raise InfeasiblePairError("density has negative entries beyond clamp tolerance")
        vals = np.maximum(vals, 0.0)
        self.m = ScalarField(self.m.grid, vals)
        mass = integrate(self.m)
        if abs(mass - self.M) > 1e-8 * self.M:
            raise InfeasiblePairError(
                f"mass {mass!r} differs from M = {self.M!r} beyond 1e-8 relative",
                report={"mass": mass, "M": self.M},
            )


def constraint_residual(pair: KPair) -> dict:
    """Strong-form residual of the continuity constraint, -eps*div(grad m) + div w.

    Implemented as the composition div(grad(.)) so that w = eps*grad(m) is
    feasible to machine precision.
    """
    lap_m = divergence(gradient(pair.m, "central"))
    r = -pair.epsilon * lap_m.values + divergence(pair.w).values
    scale = max(
        pair.epsilon * np.abs(lap_m.values).max(),
        np.abs(divergence(pair.w).values).max(),
        1e-300,
    )
    l2 = float(np.sqrt(integrate(r**2, pair.m.grid)))
    return {"max": float(np.abs(r).max()), "l2": l2, "scale": float(scale)}


def kinetic_density(m, w, ham_spec) -> np.ndarray:
    """m * L(-w/m), with the lower-semicontinuous convention at m = 0:
    0 if w vanishes too, +inf otherwise."""
    m = np.asarray(m, dtype=float)
    w = np.atleast_2d(np.asarray(w, dtype=float))
    wmag = np.sqrt((w**2).sum(axis=0))
    pos = m > 0.0
    out = np.zeros(m.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q = np.where(pos, wmag / np.where(pos, m, 1.0), 0.0)
        out[pos] = (m * lagrangian(ham_spec, q[None, ...]))[pos]
    out[~pos & (wmag > 0.0)] = np.inf
    return out


@dataclass
class EnergyBreakdown:
    kinetic: float
    potential: float
    coupling: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.coupling

    def as_dict(self) -> dict:
        return {
            "kinetic": self.kinetic,
            "potential": self.potential,
            "coupling": self.coupling,
            "total": self.total,
        }


def energy(
    pair: KPair,
    model: ModelParams,
    mollified: bool = False,
    constraint_tol: float | None = None,
    potential=None,
) -> EnergyBreakdown:
    """Quadrature of kinetic + potential + coupling terms.

    potential overrides model.potential (used by rescaled problems). With
    constraint_tol set, a continuity residual beyond it raises
    InfeasiblePairError carrying the residual report.
    """
    if constraint_tol is not None:
        rep = constraint_residual(pair)
        if rep["max"] > constraint_tol:
            raise InfeasiblePairError(
                f"continuity residual {rep['max']:.3e} exceeds tolerance {constraint_tol:.3e}",
                report=rep,
            )
    grid = pair.m.grid
    kin_dens = kinetic_density(pair.m.values, pair.w.components, model.hamiltonian)
    kin = np.inf if np.any(np.isinf(kin_dens)) else integrate(kin_dens, grid)
    pot_spec = potential if potential is not None else model.potential
    Vvals = pot_spec.field(grid).values
    pot = integrate(Vvals * pair.m.values, grid)
    if mollified:
        coup = mollified_F_functional(model, pair.m)
    else:
        coup = integrate(np.asarray(coupling_F(model.coupling, pair.m.values)), grid)
    return EnergyBreakdown(kinetic=float(kin), potential=float(pot), coupling=float(coup))


def energy_lower_bound(model: ModelParams, safety: float = 100.0) -> float:
    """Conservative evaluated lower bound -K - C * eps^(-e_lam) for the energy.

    The eps-exponent is the exact one; the constants are a conservative
    envelope (the sharp constants involve a Gagliardo-Nirenberg constant the
    bound does not need for assertion purposes).
    """
    rm = RescaledModel(model)
    C = safety * (model.coupling.C_f / (model.coupling.alpha + 1.0)) * model.M ** (
        model.coupling.alpha + 1.0
    )
    K = safety * model.M
    return -K - C * model.epsilon ** (-rm.e_lam)


def rescaled_minimal_energy(model: ModelParams, mass: float, grid: Grid, config=None) -> float:
    """e_tilde(mass): minimum of the rescaled energy over pairs with the given mass,
    obtained by one rescaled MFG solve (unit diffusion, shrunken potential)."""
    from .mfg import SolverConfig, solve_mfg

    if mass <= 0:
        return 0.0
    rm = RescaledModel(model)
    resc = model.replace(
        epsilon=1.0, M=mass, potential=rescaled_potential_spec(rm, model.epsilon)
    )
    cfg = config if config is not None else SolverConfig()
    sol = solve_mfg(resc, grid, cfg)
    return sol.energy.total


def subadditivity_gap(model: ModelParams, a: float, grid: Grid, config=None) -> float:
    """e_tilde(a) + e_tilde(M - a) - e_tilde(M) via three independent rescaled solves.

    Expected >= 0, strictly positive away from the endpoints, -> 0 at them.
    """
    if not 0.0 < a < model.M:
        raise ValueError("a must lie strictly between 0 and M")
    e_a = rescaled_minimal_energy(model, a, grid, config)
    e_b = rescaled_minimal_energy(model, model.M - a, grid, config)
    e_M = rescaled_minimal_energy(model, model.M, grid, config)
    return e_a + e_b - e_M
