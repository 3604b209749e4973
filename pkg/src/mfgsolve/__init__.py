"""Solver and experiment harness for stationary ergodic mean-field games
with aggregating local coupling on truncated domains."""

from .config import ConfigError, RunConfig, parse_config
from .energy import (
    EnergyBreakdown,
    InfeasiblePairError,
    KPair,
    constraint_residual,
    energy,
    energy_lower_bound,
    kinetic_density,
    rescaled_minimal_energy,
    subadditivity_gap,
)
from .fokker_planck import FPProblem, FPSolution, FPSolveError, flux_operator, solve_stationary_fp
from .grid import (
    Grid,
    GridShapeError,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    integrate,
    laplacian,
)
from .hjb import HJBConvergenceError, HJBProblem, HJBSolution, solve_ergodic_hjb
from .mfg import (
    MFGConvergenceError,
    MFGSolution,
    SolverConfig,
    gaussian_density,
    minimizer_verification,
    random_feasible_pair,
    solve_mfg,
)
from .model import (
    CouplingSpec,
    HamiltonianSpec,
    ModelParams,
    PotentialSpec,
    RescaledModel,
    SubcriticalityError,
    coupling_F,
    coupling_f,
    grad_hamiltonian,
    hamiltonian,
    lagrangian,
    mollified_coupling,
    mollifier_kernel,
    rescaled_potential_spec,
    smooth,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CouplingSpec",
    "EnergyBreakdown",
    "FPProblem",
    "FPSolution",
    "FPSolveError",
    "Grid",
    "GridShapeError",
    "HJBConvergenceError",
    "HJBProblem",
    "HJBSolution",
    "HamiltonianSpec",
    "InfeasiblePairError",
    "KPair",
    "MFGConvergenceError",
    "MFGSolution",
    "ModelParams",
    "PotentialSpec",
    "RescaledModel",
    "RunConfig",
    "ScalarField",
    "SolverConfig",
    "SubcriticalityError",
    "VectorField",
    "constraint_residual",
    "coupling_F",
    "coupling_f",
    "divergence",
    "energy",
    "energy_lower_bound",
    "flux_operator",
    "gaussian_density",
    "grad_hamiltonian",
    "gradient",
    "hamiltonian",
    "integrate",
    "kinetic_density",
    "lagrangian",
    "laplacian",
    "minimizer_verification",
    "mollified_coupling",
    "mollifier_kernel",
    "parse_config",
    "random_feasible_pair",
    "rescaled_minimal_energy",
    "rescaled_potential_spec",
    "smooth",
    "solve_ergodic_hjb",
    "solve_mfg",
    "solve_stationary_fp",
    "subadditivity_gap",
    "__version__",
]
