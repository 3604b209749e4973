"""Uniform Cartesian grid on a truncated box, grid functions, and finite-difference calculus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridShapeError(ValueError):
    """Field values do not match the grid they claim to live on."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-half_width, half_width]^dim with an odd number of nodes per axis.

    The odd node count guarantees the origin is a grid node, so recentering
    and symmetric densities are representable exactly.
    """

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        n = self.points_per_axis
        if n < 3 or n % 2 == 0:
            raise ValueError(f"points_per_axis must be an odd integer >= 3, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.points_per_axis**self.dim

    def axis_coords(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (dim, *grid.shape)."""
        x = self.axis_coords()
        if self.dim == 1:
            return x[None, :]
        return np.stack(np.meshgrid(x, x, indexing="ij"))

    def radius(self) -> np.ndarray:
        """Euclidean distance of each node from the origin."""
        return np.sqrt((self.coords() ** 2).sum(axis=0))

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal weights, shape grid.shape."""
        w1 = np.full(self.points_per_axis, self.spacing)
        w1[0] = w1[-1] = 0.5 * self.spacing
        if self.dim == 1:
            return w1
        return np.outer(w1, w1)

    def index_to_coord(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx))
        return -self.half_width + idx * self.spacing

    def coord_to_index(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.rint((x + self.half_width) / self.spacing).astype(int)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridShapeError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field contains non-finite values")


@dataclass
class VectorField:
    grid: Grid
    components: np.ndarray  # shape (dim, *grid.shape)

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        expected = (self.grid.dim,) + self.grid.shape
        if self.components.shape != expected:
            raise GridShapeError(
                f"components shape {self.components.shape} != expected {expected}"
            )
        if not np.all(np.isfinite(self.components)):
            raise ValueError("vector field contains non-finite values")

    def magnitude(self) -> np.ndarray:
        return np.sqrt((self.components**2).sum(axis=0))


def _check_same_grid(a, b):
    if a.grid is not b.grid and a.grid != b.grid:
        raise GridShapeError("fields live on different grids")


def gradient(f: ScalarField, scheme: str = "central", direction: VectorField | None = None) -> VectorField:
    """Discrete gradient.

    central: second-order central differences, second-order one-sided at the
    boundary (np.gradient convention).
    upwind: first-order one-sided differences chosen against the sign of the
    supplied direction field (backward where direction >= 0).
    """
    g = f.grid
    h = g.spacing
    if scheme == "central":
        if g.dim == 1:
            comps = np.gradient(f.values, h)[None, :]
        else:
            comps = np.stack(np.gradient(f.values, h))
        return VectorField(g, comps)
    if scheme == "upwind":
        if direction is None:
            raise ValueError("upwind gradient requires a direction field")
        _check_same_grid(f, direction)
        comps = np.empty((g.dim,) + g.shape)
        for ax in range(g.dim):
            fwd = (np.roll(f.values, -1, axis=ax) - f.values) / h
            bwd = (f.values - np.roll(f.values, 1, axis=ax)) / h
            # one-sided closure at the ends of this axis
            _assign_edge(fwd, ax, -1, _take_edge(bwd, ax, -1))
            _assign_edge(bwd, ax, 0, _take_edge(fwd, ax, 0))
            comps[ax] = np.where(direction.components[ax] >= 0, bwd, fwd)
        return VectorField(g, comps)
    raise ValueError(f"unknown scheme {scheme!r}")


def _take_edge(arr, ax, pos):
    sl = [slice(None)] * arr.ndim
    sl[ax] = pos
    return arr[tuple(sl)]


def _assign_edge(arr, ax, pos, val):
    sl = [slice(None)] * arr.ndim
    sl[ax] = pos
    arr[tuple(sl)] = val


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    h = g.spacing
    out = np.zeros(g.shape)
    for ax in range(g.dim):
        out += np.gradient(v.components[ax], h, axis=ax)
    return ScalarField(g, out)


def laplacian(f: ScalarField) -> ScalarField:
    """Standard (2*dim+1)-point stencil; second-order one-sided at the boundary.

    Both closures are exact on quadratics.
    """
    g = f.grid
    h2 = g.spacing**2
    out = np.zeros(g.shape)
    u = f.values
    for ax in range(g.dim):
        d2 = (np.roll(u, -1, axis=ax) - 2.0 * u + np.roll(u, 1, axis=ax)) / h2
        n = g.points_per_axis
        idx = [slice(None)] * g.dim
        for pos, js in ((0, (0, 1, 2, 3)), (-1, (n - 1, n - 2, n - 3, n - 4))):
            to = list(idx)
            to[ax] = pos
            pieces = []
            for j in js:
                sl = list(idx)
                sl[ax] = j
                pieces.append(u[tuple(sl)])
            d2[tuple(to)] = (2 * pieces[0] - 5 * pieces[1] + 4 * pieces[2] - pieces[3]) / h2
        out += d2
    return ScalarField(g, out)


def integrate(f: ScalarField | np.ndarray, grid: Grid | None = None) -> float:
    """Trapezoidal quadrature over the truncated box."""
    if isinstance(f, ScalarField):
        grid = f.grid
        vals = f.values
    else:
        if grid is None:
            raise ValueError("grid required when integrating a bare array")
        vals = np.asarray(f)
    return float((grid.quadrature_weights() * vals).sum())
