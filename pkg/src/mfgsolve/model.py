"""Model ingredients: Hamiltonian, Legendre transform, coupling, potential, mollifier, rescalings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .grid import Grid, ScalarField


class SubcriticalityError(ValueError):
    """The coupling exponent violates 0 < alpha < gamma'/N."""


@dataclass(frozen=True)
class HamiltonianSpec:
    """H(p) = C_H |p|^gamma, gamma > 1."""

    C_H: float = 0.5
    gamma: float = 2.0

    def __post_init__(self):
        if self.C_H <= 0:
            raise ValueError("C_H must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")

    @property
    def gamma_conj(self) -> float:
        return self.gamma / (self.gamma - 1.0)

    @property
    def C_L(self) -> float:
        """Constant of the exact conjugate L(q) = C_L |q|^gamma'."""
        return (1.0 - 1.0 / self.gamma) * (self.gamma * self.C_H) ** (1.0 / (1.0 - self.gamma))


def _norm(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.sqrt((p**2).sum(axis=0))


def hamiltonian(spec: HamiltonianSpec, p) -> np.ndarray:
    """H(p) for p of shape (dim,) or (dim, ...)."""
    return spec.C_H * _norm(p) ** spec.gamma


def grad_hamiltonian(spec: HamiltonianSpec, p) -> np.ndarray:
    """C_H * gamma * |p|^(gamma-2) * p, extended by 0 at p = 0."""
    p = np.asarray(p, dtype=float)
    s = _norm(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(s > 0.0, spec.C_H * spec.gamma * s ** (spec.gamma - 2.0), 0.0)
    return fac * p


def lagrangian(spec: HamiltonianSpec, q) -> np.ndarray:
    """Legendre transform of H: L(q) = C_L |q|^gamma'."""
    return spec.C_L * _norm(q) ** spec.gamma_conj


@dataclass(frozen=True)
class CouplingSpec:
    """Aggregating local coupling f(m) = -C_f m^alpha."""

    C_f: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.C_f < 0:
            raise ValueError("C_f must be nonnegative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def coupling_f(spec: CouplingSpec, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return -spec.C_f * np.maximum(m, 0.0) ** spec.alpha


def coupling_F(spec: CouplingSpec, m) -> np.ndarray:
    """Antiderivative F(m) = integral of f from 0 to m (0 for m <= 0)."""
    m = np.asarray(m, dtype=float)
    return -spec.C_f / (spec.alpha + 1.0) * np.maximum(m, 0.0) ** (spec.alpha + 1.0)


@dataclass(frozen=True)
class PotentialSpec:
    """Coercive potential: either V(x) = prefactor*|x|^b or a polynomial product
    V(x) = prefactor * prod_j |x - x_j|^{b_j}."""

    form: str = "power"
    b: float = 2.0                      # power form exponent
    prefactor: float = 1.0
    minima: tuple = ()                  # polynomial_product: points, each a tuple
    exponents: tuple = ()               # polynomial_product: one b_j per minimum

    def __post_init__(self):
        if self.form not in ("power", "polynomial_product", "zero"):
            raise ValueError(f"unknown potential form {self.form!r}")
        if self.prefactor < 0:
            raise ValueError("prefactor must be nonnegative")
        if self.form == "power" and self.b <= 0:
            raise ValueError("power exponent b must be positive")
        if self.form == "polynomial_product":
            if len(self.minima) != len(self.exponents) or not self.minima:
                raise ValueError("minima and exponents must be nonempty and matched")
            if any(bj <= 0 for bj in self.exponents):
                raise ValueError("all exponents b_j must be positive")

    @property
    def total_growth(self) -> float:
        """Growth exponent b at infinity."""
        if self.form == "power":
            return self.b
        if self.form == "zero":
            return 0.0
        return float(sum(self.exponents))

    def value(self, x) -> np.ndarray:
        """V at points x of shape (dim,) or (dim, ...)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.ndim == 1:
            x = x[:, None]
            squeeze = True
        else:
            squeeze = False
        if self.form == "zero":
            out = np.zeros(x.shape[1:])
        elif self.form == "power":
            out = self.prefactor * _norm(x) ** self.b
        else:
            out = np.full(x.shape[1:], self.prefactor)
            for xj, bj in zip(self.minima, self.exponents):
                xj = np.asarray(xj, dtype=float).reshape((x.shape[0],) + (1,) * (x.ndim - 1))
                out = out * _norm(x - xj) ** bj
        return out[()] if not squeeze else out[..., 0]

    def field(self, grid: Grid) -> ScalarField:
        return ScalarField(grid, self.value(grid.coords()))

    def growth_envelope_check(self, C_V: float, points: np.ndarray) -> bool:
        """Two-sided coercive growth envelope on sampled points."""
        v = self.value(points)
        r = _norm(np.atleast_2d(points))
        b = self.total_growth
        lo = (np.maximum(r - C_V, 0.0) ** b) / C_V
        hi = C_V * (1.0 + r) ** b
        return bool(np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12))


@dataclass(frozen=True)
class ModelParams:
    hamiltonian: HamiltonianSpec
    coupling: CouplingSpec
    potential: PotentialSpec
    dim: int = 1
    M: float = 1.0
    epsilon: float = 1.0
    mollifier_width: float = 0.05

    def __post_init__(self):
        if self.M <= 0 or self.epsilon <= 0 or self.mollifier_width <= 0:
            raise ValueError("M, epsilon and mollifier_width must be positive")
        gp = self.hamiltonian.gamma_conj
        if not (0.0 < self.coupling.alpha < gp / self.dim):
            raise SubcriticalityError(
                f"subcriticality requires 0 < alpha < gamma'/N = {gp / self.dim:.6g}, "
                f"got alpha = {self.coupling.alpha:.6g}"
            )

    def replace(self, **kw) -> "ModelParams":
        import dataclasses

        return dataclasses.replace(self, **kw)


def mollifier_kernel(grid: Grid, width: float) -> np.ndarray:
    """Normalized compactly supported bump exp(-1/(1-|x/width|^2)) sampled on the grid stencil."""
    h = grid.spacing
    r = int(np.ceil(width / h))
    if r < 1:
        r = 1
    ax = np.arange(-r, r + 1) * h
    if grid.dim == 1:
        rr = np.abs(ax) / width
    else:
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        rr = np.sqrt(X**2 + Y**2) / width
    with np.errstate(divide="ignore", over="ignore"):
        k = np.where(rr < 1.0, np.exp(-1.0 / np.maximum(1.0 - rr**2, 1e-300)), 0.0)
    return k / k.sum()


def smooth(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolution with boundary renormalization so constants are fixed points."""
    num = ndimage.convolve(values, kernel, mode="constant", cval=0.0)
    den = ndimage.convolve(np.ones_like(values), kernel, mode="constant", cval=0.0)
    return num / den


def mollified_coupling(params: ModelParams, m: ScalarField, width: float | None = None) -> ScalarField:
    """f_k[m] = f(m * chi) * chi via discrete convolution with renormalized weights."""
    if np.any(m.values < -1e-12):
        raise ValueError("mollified_coupling requires m >= 0")
    kern = mollifier_kernel(m.grid, width if width is not None else params.mollifier_width)
    inner = smooth(np.maximum(m.values, 0.0), kern)
    return ScalarField(m.grid, smooth(np.asarray(coupling_f(params.coupling, inner)), kern))


def mollified_F_functional(params: ModelParams, m: ScalarField, width: float | None = None) -> float:
    """F_k[m] = integral of F(m * chi) over the box."""
    from .grid import integrate

    kern = mollifier_kernel(m.grid, width if width is not None else params.mollifier_width)
    inner = smooth(np.maximum(m.values, 0.0), kern)
    return integrate(np.asarray(coupling_F(params.coupling, inner)), m.grid)


@dataclass(frozen=True)
class RescaledModel:
    """Vanishing-viscosity rescaling exponents and the rescaled ingredients.

    e_len  : length scale,    y = (x - x_eps) / eps^e_len
    e_mass : density factor,  m_bar = eps^e_mass * m
    e_lam  : lambda factor,   lam_tilde = eps^e_lam * lam
    e_u    : value factor,    u_bar = eps^e_u * (u - min u)
    """

    base: ModelParams

    @property
    def e_len(self) -> float:
        gp = self.base.hamiltonian.gamma_conj
        return gp / (gp - self.base.coupling.alpha * self.base.dim)

    @property
    def e_mass(self) -> float:
        return self.base.dim * self.e_len

    @property
    def e_lam(self) -> float:
        return self.base.coupling.alpha * self.e_mass

    @property
    def e_u(self) -> float:
        gp = self.base.hamiltonian.gamma_conj
        N, a = self.base.dim, self.base.coupling.alpha
        return (N * a * (gp - 1.0) - gp) / (gp - a * N)

    @property
    def e_grad(self) -> float:
        """Gradient scale in H_eps(p) = eps^e_lam H(eps^-e_grad p)."""
        gp = self.base.hamiltonian.gamma_conj
        N, a = self.base.dim, self.base.coupling.alpha
        return N * a * (gp - 1.0) / (gp - a * N)


def rescaled_ingredients(rm: RescaledModel, eps: float) -> dict[str, Callable]:
    """The rescaled Hamiltonian, coupling, potential and Lagrangian as callables.

    For the canonical power laws H_eps == H, f_eps == f and L_eps == L identically;
    only the potential genuinely shrinks.
    """
    base = rm.base
    s_lam = eps**rm.e_lam
    s_grad = eps**rm.e_grad
    s_mass = eps**rm.e_mass
    s_len = eps**rm.e_len

    def H_eps(p):
        return s_lam * hamiltonian(base.hamiltonian, np.asarray(p, dtype=float) / s_grad)

    def f_eps(m):
        return s_lam * coupling_f(base.coupling, np.asarray(m, dtype=float) / s_mass)

    def V_eps(y):
        y = np.asarray(y, dtype=float)
        return s_lam * base.potential.value(s_len * y)

    def L_eps(q):
        # conjugate of p -> s*H(p/r) is q -> s*L(r*q/s)
        return s_lam * lagrangian(base.hamiltonian, s_grad * np.asarray(q, dtype=float) / s_lam)

    return {"H": H_eps, "f": f_eps, "V": V_eps, "L": L_eps}


def rescaled_potential_spec(rm: RescaledModel, eps: float) -> PotentialSpec:
    """V_eps expressed inside the potential family (exact for both forms)."""
    spec = rm.base.potential
    s_lam = eps**rm.e_lam
    s_len = eps**rm.e_len
    if spec.form == "zero":
        return spec
    if spec.form == "power":
        return PotentialSpec(form="power", b=spec.b, prefactor=spec.prefactor * s_lam * s_len**spec.b)
    minima = tuple(tuple(np.asarray(xj, dtype=float) / s_len) for xj in spec.minima)
    pref = spec.prefactor * s_lam * s_len ** float(sum(spec.exponents))
    return PotentialSpec(
        form="polynomial_product", prefactor=pref, minima=minima, exponents=spec.exponents
    )


def validate_hamiltonian_bounds(spec: HamiltonianSpec, H_values, p, K: float = 0.0) -> bool:
    """Two-sided growth bound C_H|p|^g - K <= H(p) <= C_H|p|^g + K for user-supplied H samples."""
    envelope = spec.C_H * _norm(p) ** spec.gamma
    H_values = np.asarray(H_values, dtype=float)
    return bool(np.all(H_values >= envelope - K - 1e-12) and np.all(H_values <= envelope + K + 1e-12))


def validate_coupling_bounds(spec: CouplingSpec, f_values, m, K: float = 0.0) -> bool:
    """-C_f m^a - K <= f(m) <= -C_f m^a + K for user-supplied coupling samples."""
    envelope = -spec.C_f * np.asarray(m, dtype=float) ** spec.alpha
    f_values = np.asarray(f_values, dtype=float)
    return bool(np.all(f_values >= envelope - K - 1e-12) and np.all(f_values <= envelope + K + 1e-12))
