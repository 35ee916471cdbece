import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkholonomy import jets
from kkholonomy.jets import Jet, JetError

coords = st.floats(-1.5, 1.5, allow_nan=False)


def _fd_grad(f, p, h=1e-6):
    p = np.asarray(p, dtype=float)
    out = []
    for i in range(len(p)):
        e = np.zeros_like(p)
        e[i] = h
        out.append((f(p + e) - f(p - e)) / (2 * h))
    return np.array(out)


def _expr(x, y):
    return jets.sin(x * y) * jets.exp(0.3 * x) + x**3 / (2.0 + jets.cos(y)) - jets.arctan(x - y) * jets.sqrt(1.5 + x * x)


def _expr_np(p):
    x, y = p
    return math.sin(x * y) * math.exp(0.3 * x) + x**3 / (2 + math.cos(y)) - math.atan(x - y) * math.sqrt(1.5 + x * x)


@given(coords, coords)
@settings(max_examples=40, deadline=None)
def test_gradient_matches_finite_differences(x, y):
    X, Y = Jet.variables(np.array([[x, y]]), 2)
    J = _expr(X, Y)
    assert J.value[0] == pytest.approx(_expr_np((x, y)), abs=1e-12)
    assert np.allclose(J.grad().value[0], _fd_grad(_expr_np, [x, y]), atol=1e-6)


def test_second_derivatives_match_finite_differences():
    p = np.array([0.4, -0.7])
    X, Y = Jet.variables(p[None], 3)
    J = _expr(X, Y)
    h = 1e-4
    for (i, j) in [(0, 0), (0, 1), (1, 1)]:
        ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
        fd = (_expr_np(p + ei + ej) - _expr_np(p + ei - ej) - _expr_np(p - ei + ej) + _expr_np(p - ei - ej)) / (4 * h * h)
        assert J.partial((i, j))[0] == pytest.approx(fd, abs=1e-5)


def test_univariate_series_exact():
    (x,) = Jet.variables(np.array([[0.0]]), 5)
    s = jets.sin(x)
    # d^k sin / dx^k at 0 = 0, 1, 0, -1, 0, 1
    assert [s.partial((0,) * k)[0] for k in range(6)] == pytest.approx([0, 1, 0, -1, 0, 1], abs=1e-14)
    e = jets.exp(x)
    assert [e.partial((0,) * k)[0] for k in range(6)] == pytest.approx([1] * 6, abs=1e-14)


@given(coords, coords)
@settings(max_examples=30, deadline=None)
def test_product_rule(x, y):
    X, Y = Jet.variables(np.array([[x, y]]), 2)
    f, g = jets.sin(X) * Y, jets.exp(Y - X)
    lhs = (f * g).grad().value
    rhs = (f.grad() * g.value[..., None] + g.grad() * f.value[..., None]).value
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_reciprocal_of_zero_raises():
    (x,) = Jet.variables(np.array([[0.0]]), 1)
    with pytest.raises(ZeroDivisionError):
        jets.reciprocal(x)


def test_order_limit():
    with pytest.raises(JetError):
        Jet.constant(1.0, 2, 99)


def test_matrix_inverse_derivative():
    X, Y = Jet.variables(np.array([[0.3, -0.2]]), 1)
    A = jets.stack([jets.stack([2.0 + X, Y], axis=-1), jets.stack([Y, 3.0 - X * Y], axis=-1)], axis=-2)
    Ai = jets.inv(A)
    # d(A^-1) = -A^-1 dA A^-1
    a = A.value[0]
    ai = np.linalg.inv(a)
    for k in range(2):
        dA = np.array([[A[0, i, j].deriv(k).value for j in range(2)] for i in range(2)])
        dAi = np.array([[Ai[0, i, j].deriv(k).value for j in range(2)] for i in range(2)])
        assert np.allclose(dAi, -ai @ dA @ ai, atol=1e-13)
