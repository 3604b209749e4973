import numpy as np
import pytest

from mfgsolve.grid import (
    Grid,
    GridShapeError,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    integrate,
    laplacian,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(3, 1.0, 11)
    with pytest.raises(ValueError):
        Grid(1, -1.0, 11)
    with pytest.raises(ValueError):
        Grid(1, 1.0, 10)  # even node count
    with pytest.raises(ValueError):
        Grid(1, 1.0, 1)


def test_origin_is_a_node():
    g = Grid(1, 3.0, 13)
    assert 0.0 in g.axis_coords()
    g2 = Grid(2, 3.0, 13)
    assert g2.coords().shape == (2, 13, 13)


def test_spacing_and_index_round_trip():
    g = Grid(1, 8.0, 401)
    assert g.spacing == pytest.approx(0.04)
    x = g.axis_coords()
    idx = g.coord_to_index(x)
    assert np.allclose(g.index_to_coord(idx), x)


def test_quadrature_exact_for_linear():
    g = Grid(1, 2.0, 81)
    x = g.axis_coords()
    # trapezoid integrates affine functions exactly
    assert integrate(3.0 * x + 1.0, g) == pytest.approx(4.0, abs=1e-13)
    g2 = Grid(2, 1.0, 41)
    ones = np.ones(g2.shape)
    assert integrate(ones, g2) == pytest.approx(4.0, abs=1e-12)


def test_gradient_central_exact_on_quadratics():
    g = Grid(1, 2.0, 41)
    x = g.axis_coords()
    f = ScalarField(g, x**2 - 3.0 * x)
    got = gradient(f, "central").components[0]
    # interior central differences are exact on quadratics; edges are one-sided
    assert np.allclose(got[1:-1], (2.0 * x - 3.0)[1:-1], atol=1e-12)


def test_laplacian_exact_on_quadratics():
    g = Grid(2, 1.5, 31)
    X, Y = g.coords()
    f = ScalarField(g, X**2 + 2.0 * Y**2 + X * Y - X)
    got = laplacian(f).values
    assert np.allclose(got, 6.0, atol=1e-10)


def test_upwind_gradient_picks_sides():
    g = Grid(1, 1.0, 21)
    x = g.axis_coords()
    f = ScalarField(g, x.copy())
    d = VectorField(g, np.ones((1,) + g.shape))
    got = gradient(f, "upwind", direction=d).components[0]
    assert np.allclose(got, 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        gradient(f, "upwind")
    with pytest.raises(ValueError):
        gradient(f, "bogus")


def test_divergence_of_gradient_matches_laplacian_interior():
    g = Grid(1, 2.0, 201)
    x = g.axis_coords()
    f = ScalarField(g, np.sin(x))
    lap1 = divergence(gradient(f, "central")).values
    lap2 = laplacian(f).values
    assert np.allclose(lap1[2:-2], lap2[2:-2], atol=1e-2)


def test_field_shape_checks():
    g = Grid(1, 1.0, 11)
    with pytest.raises(GridShapeError):
        ScalarField(g, np.zeros(12))
    with pytest.raises(GridShapeError):
        VectorField(g, np.zeros((2, 11)))
    with pytest.raises(ValueError):
        ScalarField(g, np.full(11, np.nan))
