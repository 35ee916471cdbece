import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkholonomy import jets
from kkholonomy.fields import (
    DimensionError,
    OneForm,
    VectorField,
    cartan_lie_derivative,
    exterior_derivative,
    halton_points,
    interior,
    lie_bracket,
    lie_derivative,
    partial,
)

coef = st.floats(-2.0, 2.0, allow_nan=False)
PTS = halton_points([[-1, 1], [-1, 1], [-1, 1]], 12)


def _poly_field(c, cls=VectorField):
    """Random quadratic-plus-trig 3D field with coefficients c (9 numbers)."""

    def fn(x):
        return [
            c[0] + c[1] * x[1] * x[2] + c[2] * jets.sin(x[0]),
            c[3] * x[0] ** 2 + c[4] * x[2],
            c[5] * jets.cos(x[1]) + c[6] * x[0] * x[1] + c[7] + c[8] * x[2] ** 2,
        ]

    return cls(fn, dim=3)


fields9 = st.lists(coef, min_size=9, max_size=9)


def test_bracket_example():
    X = VectorField(lambda x: [0.0, x[0]], dim=2)  # x d/dy
    Y = VectorField(lambda x: [x[1], 0.0], dim=2)  # y d/dx
    assert np.allclose(lie_bracket(X, Y)(np.array([1.0, 1.0])), [1.0, -1.0])


@given(fields9, fields9)
@settings(max_examples=20, deadline=None)
def test_bracket_antisymmetric(a, b):
    X, Y = _poly_field(a), _poly_field(b)
    assert np.max(np.abs((lie_bracket(X, Y) + lie_bracket(Y, X))(PTS))) < 1e-12


@given(fields9, fields9, fields9)
@settings(max_examples=15, deadline=None)
def test_jacobi_identity(a, b, c):
    X, Y, Z = _poly_field(a), _poly_field(b), _poly_field(c)
    J = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) + lie_bracket(Z, lie_bracket(X, Y))
    assert np.max(np.abs(J(PTS))) < 1e-11


@given(fields9)
@settings(max_examples=20, deadline=None)
def test_d_squared_vanishes(a):
    alpha = _poly_field(a, OneForm)
    assert np.max(np.abs(exterior_derivative(exterior_derivative(alpha))(PTS))) < 1e-12


@given(fields9, fields9)
@settings(max_examples=15, deadline=None)
def test_cartan_formula_on_one_forms(a, b):
    alpha, X = _poly_field(a, OneForm), _poly_field(b)
    diff = lie_derivative(alpha, X) - cartan_lie_derivative(alpha, X)
    assert np.max(np.abs(diff(PTS))) < 1e-12


def test_exterior_derivative_has_no_half():
    # alpha = x dy: d alpha(e_x, e_y) = 1
    alpha = OneForm(lambda x: [0.0, x[0]], dim=2)
    da = exterior_derivative(alpha)(np.array([0.3, 0.2]))
    assert np.allclose(da, [[0.0, 1.0], [-1.0, 0.0]])


def test_interior_of_two_form():
    alpha = OneForm(lambda x: [0.0, x[0]], dim=2)
    X = VectorField(lambda x: [1.0, 0.0], dim=2)
    assert np.allclose(interior(X, exterior_derivative(alpha))(np.array([0.0, 0.0])), [0.0, 1.0])


def test_partial_derivatives_exact():
    f = VectorField(lambda x: [x[0] ** 3 * x[1], jets.exp(x[1])], dim=2)
    p = np.array([0.5, 0.2])
    assert partial(f, p, (0, 0, 1)) == pytest.approx([6 * 0.5, 0.0])
    assert partial(f, p, (1, 1)) == pytest.approx([0.0, np.exp(0.2)])
    with pytest.raises(DimensionError):
        partial(f, p, (2,))


def test_halton_points_deterministic_and_inside():
    a = halton_points([[0, 1], [2, 5]], 50)
    b = halton_points([[0, 1], [2, 5]], 50)
    assert np.array_equal(a, b)
    assert a.shape == (50, 2)
    assert np.all((a[:, 0] > 0) & (a[:, 0] < 1) & (a[:, 1] > 2) & (a[:, 1] < 5))


def test_dimension_mismatch_rejected():
    X = VectorField(lambda x: [1.0, 0.0], dim=2)
    Y = VectorField(lambda x: [1.0, 0.0, 0.0], dim=3)
    with pytest.raises(DimensionError):
        lie_bracket(X, Y)
