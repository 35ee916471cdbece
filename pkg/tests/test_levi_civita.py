import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from kkholonomy import jets
from kkholonomy.catalog import flat_metric, sphere_metric
from kkholonomy.fields import MetricField, VectorField, halton_points
from kkholonomy.levi_civita import (
    Polyline,
    TransverseConnection,
    christoffel,
    covariant_derivative,
    killing_residual,
    metric_check,
    metric_compatibility_residual,
    parallel_transport,
    riemann_tensor,
)

PTS = halton_points([[-1, 1], [-1, 1]], 16)


def _conformal(f, df):
    """Metric e^{2f} delta and its Christoffel oracle."""
    g = MetricField(lambda x: [[jets.exp(2 * f(x)), 0.0], [0.0, jets.exp(2 * f(x))]], dim=2, signature=(0, 2))

    def gamma(p):
        d = df(p)
        G = np.zeros((2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    G[k, i, j] = (k == i) * d[j] + (k == j) * d[i] - (i == j) * d[k]
        return G

    return g, gamma


def test_sphere_metric_at_origin():
    assert np.allclose(sphere_metric(1.0)(np.zeros(2)), 4 * np.eye(2))


def test_christoffel_conformal_oracle():
    f = lambda x: -jets.log(1 + x[0] ** 2 + x[1] ** 2) + 0.1 * x[0]
    df = lambda p: np.array([-2 * p[0] / (1 + p @ p) + 0.1, -2 * p[1] / (1 + p @ p)])
    g, oracle = _conformal(f, df)
    G = christoffel(g)(PTS)
    for b, p in enumerate(PTS):
        assert np.allclose(G[b], oracle(p), atol=1e-13)


def test_unit_sphere_curvature():
    g = sphere_metric(1.0)
    R = riemann_tensor(christoffel(g))(PTS)
    gv = g(PTS)
    model = np.einsum("li,bkj->blkij", np.eye(2), gv) - np.einsum("lj,bki->blkij", np.eye(2), gv)
    assert np.max(np.abs(R - model)) < 1e-12


def test_metric_compatibility_and_checks():
    g = sphere_metric(0.5)
    assert metric_compatibility_residual(g, christoffel(g), PTS) < 1e-13
    info = metric_check(g, PTS)
    assert info["signature_ok"] and info["symmetry"] == 0.0


def test_rotation_is_killing_on_sphere():
    rot = VectorField(lambda x: [-x[1], x[0]], dim=2)
    assert killing_residual(sphere_metric(1.0), rot, PTS) < 1e-13
    shear = VectorField(lambda x: [x[1], 0.0], dim=2)
    assert killing_residual(sphere_metric(1.0), shear, PTS) > 0.1


def test_covariant_derivative_flat_is_directional():
    g = flat_metric(2)
    X = VectorField(lambda x: [1.0, 0.0], dim=2)
    Y = VectorField(lambda x: [x[0] ** 2, x[1]], dim=2)
    assert np.allclose(covariant_derivative(christoffel(g), X, Y)(PTS), np.column_stack([2 * PTS[:, 0], 0 * PTS[:, 0]]))


pt = st.floats(-0.6, 0.6, allow_nan=False)


@given(st.lists(st.tuples(pt, pt), min_size=2, max_size=4))
@settings(max_examples=10, deadline=None)
def test_transport_there_and_back_is_identity(verts):
    g = sphere_metric(1.0)
    gamma = christoffel(g)
    path = Polyline(np.array([[(0.1, -0.2), *verts]]))
    P = parallel_transport(gamma, path, np.eye(2), tol=1e-11, max_refine=14)
    Q = parallel_transport(gamma, path.reversed(), P, tol=1e-11, max_refine=14)
    assert np.max(np.abs(Q[0] - np.eye(2))) < 1e-8


@given(st.lists(st.tuples(pt, pt), min_size=1, max_size=3))
@settings(max_examples=10, deadline=None)
def test_transport_preserves_metric(verts):
    g = sphere_metric(1.0)
    path = Polyline(np.array([[(0.0, 0.1), *verts]]))
    P = parallel_transport(christoffel(g), path, np.eye(2), tol=1e-11, max_refine=14)[0]
    g0 = g(np.array([0.0, 0.1]))
    g1 = g(np.array(verts[-1]))
    assert np.max(np.abs(P.T @ g1 @ P - g0)) < 1e-8


def test_transverse_connection_preserves_orthogonality():
    g = flat_metric(2)
    xi = VectorField(lambda x: [1.0, 0.0], dim=2)
    tc = TransverseConnection(g, xi, 1)
    path = Polyline(np.array([[(0.0, 0.0), (0.5, 0.3), (0.1, 0.7)]]))
    U = tc.transport(path, np.array([[0.0], [1.0]]), tol=1e-11)
    assert np.allclose(U[0, :, 0], [0.0, 1.0])
