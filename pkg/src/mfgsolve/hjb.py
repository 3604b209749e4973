"""Ergodic Hamilton-Jacobi-Bellman solver: -eps*Lap(u) + H(grad u) + lambda = rhs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .grid import Grid, ScalarField, gradient
from .model import HamiltonianSpec


class HJBConvergenceError(RuntimeError):
    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


@dataclass
class HJBProblem:
    rhs: ScalarField
    epsilon: float
    hamiltonian: HamiltonianSpec

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not np.all(np.isfinite(self.rhs.values)):
            raise ValueError("rhs must be finite (bounded below)")


@dataclass
class HJBSolution:
    u: ScalarField
    lam: float
    iterations: int
    residual: float
    argmin_x: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.u.grid


def _backward_diff_1d(n: int, h: float, order: int) -> sparse.csr_matrix:
    # row 0 is left zero: no backward stencil at the left edge
    main = np.full(n, 1.0 / h)
    sub = np.full(n - 1, -1.0 / h)
    main[0] = 0.0
    if order >= 2:
        main[2:] = 1.5 / h
        sub[1:] = -2.0 / h
        subsub = np.full(n - 2, 0.5 / h)
        return sparse.diags([main, sub, subsub], [0, -1, -2], format="csr")
    return sparse.diags([main, sub], [0, -1], format="csr")


def _forward_diff_1d(n: int, h: float, order: int) -> sparse.csr_matrix:
    # row n-1 is left zero: no forward stencil at the right edge
    main = np.full(n, -1.0 / h)
    sup = np.full(n - 1, 1.0 / h)
    main[-1] = 0.0
    if order >= 2:
        main[: n - 2] = -1.5 / h
        sup[: n - 2] = 2.0 / h
        supsup = np.full(n - 2, -0.5 / h)
        return sparse.diags([main, sup, supsup], [0, 1, 2], format="csr")
    return sparse.diags([main, sup], [0, 1], format="csr")


def _laplacian_1d(n: int, h: float) -> sparse.csr_matrix:
    h2 = h * h
    A = sparse.diags(
        [np.full(n, -2.0 / h2), np.full(n - 1, 1.0 / h2), np.full(n - 1, 1.0 / h2)],
        [0, -1, 1],
    ).tolil()
    A[0, :4] = [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2]
    A[n - 1, n - 4 :] = [-1.0 / h2, 4.0 / h2, -5.0 / h2, 2.0 / h2]
    return A.tocsr()


def _lift(grid: Grid, D1: sparse.spmatrix, axis: int) -> sparse.csr_matrix:
    if grid.dim == 1:
        return D1.tocsr()
    eye = sparse.identity(grid.points_per_axis, format="csr")
    return (sparse.kron(D1, eye) if axis == 0 else sparse.kron(eye, D1)).tocsr()


class _Discretization:
    """Cached sparse operators for one (grid, order) combination."""

    def __init__(self, grid: Grid, order: int):
        n, h = grid.points_per_axis, grid.spacing
        self.grid = grid
        self.Bm = [_lift(grid, _backward_diff_1d(n, h, order), ax) for ax in range(grid.dim)]
        self.Bp = [_lift(grid, _forward_diff_1d(n, h, order), ax) for ax in range(grid.dim)]
        self.A = sum(_lift(grid, _laplacian_1d(n, h), ax) for ax in range(grid.dim))


_disc_cache: dict = {}


def _discretization(grid: Grid, order: int) -> _Discretization:
    key = (grid.dim, grid.half_width, grid.points_per_axis, order)
    if key not in _disc_cache:
        _disc_cache[key] = _Discretization(grid, order)
    return _disc_cache[key]


def _godunov_parts(disc: _Discretization, u: np.ndarray):
    """Upwind slope parts a_plus (backward, kept if >0) and b_minus (forward, kept if <0)."""
    a_plus = [np.maximum(Bm @ u, 0.0) for Bm in disc.Bm]
    b_minus = [np.minimum(Bp @ u, 0.0) for Bp in disc.Bp]
    phi = sum(a**2 for a in a_plus) + sum(b**2 for b in b_minus)
    return a_plus, b_minus, phi


def _residual(disc, ham: HamiltonianSpec, eps, u, lam, rhs):
    _, _, phi = _godunov_parts(disc, u)
    return -eps * (disc.A @ u) + ham.C_H * phi ** (ham.gamma / 2.0) + lam - rhs


def _jacobian(disc, ham: HamiltonianSpec, eps, u):
    a_plus, b_minus, phi = _godunov_parts(disc, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(phi > 0.0, ham.C_H * ham.gamma * phi ** ((ham.gamma - 2.0) / 2.0), 0.0)
    J = (-eps) * disc.A
    for a, Bm in zip(a_plus, disc.Bm):
        J = J + sparse.diags(fac * a) @ Bm
    for b, Bp in zip(b_minus, disc.Bp):
        J = J + sparse.diags(fac * b) @ Bp
    return J.tocsr()


def _bordered_solve(J, ones_col, e_ref, F):
    """Solve the gauge-bordered Newton system, adding Levenberg-Marquardt
    diagonal damping if the undamped system is singular."""
    n = J.shape[0]
    diag_scale = float(np.abs(J.diagonal()).max()) or 1.0
    mu = 0.0
    for _ in range(8):
        Jreg = J if mu == 0.0 else (J + mu * sparse.identity(n)).tocsr()
        Jfull = sparse.bmat([[Jreg, ones_col], [e_ref, None]], format="csc")
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                step = spsolve(Jfull, -F)
            except (MatrixRankWarning, RuntimeError):
                step = np.full(n + 1, np.nan)
        if np.all(np.isfinite(step)):
            return step
        mu = 1e-10 * diag_scale if mu == 0.0 else 100.0 * mu
    raise HJBConvergenceError("bordered Newton system remained singular under damping")


def solve_ergodic_hjb(
    problem: HJBProblem,
    tol: float = 1e-10,
    max_iter: int = 60,
    order: int = 2,
    u0: np.ndarray | None = None,
    lam0: float | None = None,
) -> HJBSolution:
    """Newton iteration on the upwind-Godunov discretization with a gauge row.

    The ergodic constant is an extra unknown; gauge u(x_ref) = 0 closes the
    system, and the returned u is shifted to min u = 0 afterwards. Falls back
    to damped pseudo-time marching if Newton stalls.
    """
    grid = problem.rhs.grid
    disc = _discretization(grid, order)
    rhs = problem.rhs.values.ravel()
    eps = problem.epsilon
    ham = problem.hamiltonian
    scale = max(1.0, np.abs(rhs).max())

    rhs_lo, rhs_hi = float(rhs.min()), float(rhs.max())
    # nonzero initial slope keeps the upwind Jacobian away from its degenerate
    # phi = 0 configuration (where -eps*A alone annihilates both constants and
    # linear functions); the amplitude is chosen so that H(grad u0) stays of
    # the order of the data range instead of exploding for steep potentials
    grads0 = np.gradient(rhs.reshape(grid.shape), grid.spacing)
    if grid.dim == 1:
        grads0 = [grads0]
    gmax = max(float(np.abs(gi).max()) for gi in grads0)
    amp = min(0.5, ((rhs_hi - rhs_lo) / ham.C_H) ** (1.0 / ham.gamma) / max(gmax, 1e-30))
    if u0 is None:
        u = amp * (rhs - rhs_lo)
    else:
        u = np.asarray(u0, dtype=float).ravel().copy()
    lam = float(np.min(rhs)) if lam0 is None else float(lam0)
    iref = int(np.argmin(rhs))
    e_ref = sparse.csr_matrix((np.ones(1), (np.zeros(1, int), np.array([iref]))), shape=(1, grid.num_nodes))
    ones_col = sparse.csr_matrix(np.ones((grid.num_nodes, 1)))

    history = []
    h2 = grid.spacing**2
    iters = [0]

    def _newton(disc_a, u, lam, iters_budget, eps_n):
        """Strict-decrease damped Newton; returns (u, lam, res, converged)."""
        best = (u.copy(), lam, np.inf)
        for _ in range(iters_budget):
            G = _residual(disc_a, ham, eps_n, u, lam, rhs)
            res = float(np.abs(G).max())
            history.append(res)
            if not np.isfinite(res):
                return best[0], best[1], best[2], False
            if res < best[2]:
                best = (u.copy(), lam, res)
            # rounding floor of the residual evaluation itself: the Laplacian
            # stencil amplifies machine noise by eps*|u|/h^2
            floor = 64.0 * np.finfo(float).eps * (
                eps_n * np.abs(u).max() / h2 + np.abs(rhs).max() + abs(lam)
            )
            if res <= max(tol * scale, floor) and abs(u[iref]) <= 1e-8 * scale:
                return u, lam, res, True
            J = _jacobian(disc_a, ham, eps_n, u)
            F = np.concatenate([G, [u[iref]]])
            try:
                step = _bordered_solve(J, ones_col, e_ref, F)
            except HJBConvergenceError:
                return best[0], best[1], best[2], False
            # the multiplier of an ergodic problem with H >= H(0) = 0 is
            # bracketed by the data range; truncating the step there prevents
            # excursions into spurious flat-u configurations
            t = 1.0
            dl = step[-1]
            if lam + dl > rhs_hi and dl > 0:
                t = max(min((rhs_hi - lam) / dl, 1.0), 1e-4)
            elif lam + dl < rhs_lo and dl < 0:
                t = max(min((rhs_lo - lam) / dl, 1.0), 1e-4)
            base = np.abs(F).max()
            improved = False
            for _ls in range(40):
                u_try = u + t * step[:-1]
                lam_try = lam + t * step[-1]
                F_try = np.concatenate(
                    [_residual(disc_a, ham, eps_n, u_try, lam_try, rhs), [u_try[iref]]]
                )
                if np.abs(F_try).max() < (1.0 - 1e-4 * t) * base:
                    improved = True
                    break
                t *= 0.5
            if not improved:
                return best[0], best[1], best[2], False
            u, lam = u + t * step[:-1], lam + t * step[-1]
            iters[0] += 1
        return best[0], best[1], best[2], False

    def _finish(u, lam, res):
        u = u - u.min()
        umin_idx = int(np.argmin(u))
        return HJBSolution(
            u=ScalarField(grid, u.reshape(grid.shape)),
            lam=lam,
            iterations=iters[0],
            residual=float(res),
            argmin_x=grid.index_to_coord(np.unravel_index(umin_idx, grid.shape)),
        )

    u, lam, res, ok = _newton(disc, u, lam, max_iter, eps)
    if ok:
        return _finish(u, lam, res)
    # fallback 0: a supplied warm start can be worse than the default initial
    # guess (e.g. interpolated data whose kinks blow up the discrete Laplacian)
    if u0 is not None:
        u_d, lam_d, res_d, ok_d = _newton(disc, amp * (rhs - rhs_lo), rhs_lo, max_iter, eps)
        if ok_d:
            return _finish(u_d, lam_d, res_d)
    # fallback 1: viscosity continuation, restarting from scratch at a heavily
    # diffusive (hence easy) problem and halving the artificial viscosity with
    # warm starts until the true epsilon is reached
    u_c = amp * (rhs - rhs_lo)
    lam_c = rhs_lo
    eps_art = 64.0 * eps
    cont_ok = True
    while True:
        u_c, lam_c, res_c, ok_c = _newton(disc, u_c, lam_c, max_iter, eps_art)
        if not ok_c:
            cont_ok = False
            break
        if eps_art <= eps:
            break
        eps_art = max(eps, 0.5 * eps_art)
    if cont_ok:
        return _finish(u_c, lam_c, res_c)
    # fallback 2: the first-order upwind scheme is monotone (M-matrix Jacobian)
    # and more robust; converge there, then polish at the requested order
    if order > 1:
        disc1 = _discretization(grid, 1)
        u1, lam1, _, ok1 = _newton(disc1, u, lam, max_iter, eps)
        if ok1:
            u, lam = u1, lam1
        u, lam, res, ok = _newton(disc, u, lam, max_iter, eps)
        if ok:
            return _finish(u, lam, res)
    # fallback 3: damped pseudo-time marching (effective on coarse grids only)
    u, lam = _march(disc, ham, eps, rhs, u, lam, iref, sweeps=5000)
    u, lam, res, ok = _newton(disc, u, lam, max_iter, eps)
    if ok:
        return _finish(u, lam, res)
    raise HJBConvergenceError(
        f"HJB Newton failed to reach tolerance (last residual {history[-1]:.3e})",
        residual_history=history,
    )


def _march(disc, ham, eps, rhs, u, lam, iref, sweeps):
    """Normalized long-time iteration; robust, first-order accurate in pseudo-time."""
    h = disc.grid.spacing
    for _ in range(sweeps):
        _, _, phi = _godunov_parts(disc, u)
        p_max = float(np.sqrt(phi.max()))
        speed = ham.C_H * ham.gamma * max(p_max, 1e-12) ** (ham.gamma - 1.0)
        dt = 0.4 / (2.0 * disc.grid.dim * eps / h**2 + 2.0 * speed / h)
        v = u + dt * (eps * (disc.A @ u) - ham.C_H * phi ** (ham.gamma / 2.0) + rhs)
        lam = v[iref] / dt
        u = v - v[iref]
    return u, lam


def gradient_growth_check(sol: HJBSolution, growth_b: float, gamma: float) -> dict:
    """Ratio sup |grad u| / (1+|x|)^(b/gamma); the implied Bernstein-type constant."""
    g = gradient(sol.u, "central").magnitude()
    r = sol.grid.radius()
    env = (1.0 + r) ** (growth_b / gamma)
    ratio = g / env
    return {"K": float(ratio.max()), "ratios": ratio}


def growth_lower_check(sol: HJBSolution, growth_b: float, gamma: float) -> dict:
    """Largest C with u >= C|x|^(1+b/gamma) - 1/C on the outer half of the domain."""
    if growth_b <= 0:
        return {"applicable": False, "C": None}
    r = sol.grid.radius()
    outer = r >= 0.5 * sol.grid.half_width
    q = 1.0 + growth_b / gamma
    uvals = sol.u.values[outer]
    rq = r[outer] ** q

    def feasible(C):
        return np.all(uvals >= C * rq - 1.0 / C)

    lo, hi = 1e-8, 1e8
    if not feasible(lo):
        return {"applicable": True, "C": 0.0}
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return {"applicable": True, "C": float(lo)}
