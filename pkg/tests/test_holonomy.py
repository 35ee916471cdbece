import numpy as np
import pytest

from kkholonomy.catalog import get_scenario, sphere_metric
from kkholonomy.holonomy import (
    LeviCivitaConnection,
    LogarithmError,
    _guarded_log,
    ambrose_singer_generators,
    contains,
    lie_closure,
    loop_holonomy,
    max_principal_angle,
    numerical_rank,
    sample_box,
    span_basis,
)


def _E(i, j, n=3):
    M = np.zeros((n, n))
    M[i, j], M[j, i] = 1.0, -1.0
    return M


def test_rank_rule_and_gap():
    rr = numerical_rank([3.0, 1.0, 1e-12])
    assert rr.dimension == 2 and rr.determinate
    rr = numerical_rank([1.0, 1e-5, 1e-7])
    assert rr.dimension == 2 and not rr.determinate  # 1e-5/1e-7 < 1e3
    assert numerical_rank([1e-12, 0.0]).dimension == 0
    assert numerical_rank([]).dimension == 0


def test_lie_closure_generates_so3():
    basis, gens, rr = lie_closure([_E(0, 1), _E(1, 2)])
    assert rr.dimension == 3 and gens >= 1
    assert contains(basis, [_E(0, 2)]) < 1e-12


def test_abelian_family_is_closed():
    basis, _, rr = lie_closure([_E(0, 1), 2 * _E(0, 1)])
    assert rr.dimension == 1


def test_principal_angles():
    a, _ = span_basis([_E(0, 1)])
    b, _ = span_basis([_E(0, 1) + 1e-3 * _E(1, 2)])
    assert max_principal_angle(a, b) == pytest.approx(1e-3, rel=1e-3)
    assert max_principal_angle(a, np.zeros((0, 3, 3))) == pytest.approx(np.pi / 2)


def test_guarded_log():
    th = 0.1
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert np.allclose(_guarded_log(R), [[0, -th], [th, 0]])
    with pytest.raises(LogarithmError):
        _guarded_log(-np.eye(2))


def test_round_sphere_holonomy():
    conn = LeviCivitaConnection(sphere_metric(1.0))
    o = np.array([0.1, -0.2])
    a = ambrose_singer_generators(conn, o, sample_box(o, 0.5, 16))
    lp = loop_holonomy(conn, o, h=0.01)
    assert a.dimension == 1 and lp.dimension == 1 and a.determinate
    assert max_principal_angle(a.basis, lp.basis) < 1e-6
    # log(P)/area approximates -R(e0, e1) at small area
    R01 = conn.curvature(o)[0][:, :, 0, 1]
    assert np.linalg.norm(lp.generators[0] + R01) / np.linalg.norm(R01) < 0.01


def test_flat_holonomy_trivial():
    sc = get_scenario("flat-torus")
    rb = sc.build_recurrent()
    conn = LeviCivitaConnection(rb.metric)
    o = sc.origin("total")
    est = ambrose_singer_generators(conn, o, sample_box(o, 0.5, 8))
    assert est.dimension == 0 and est.determinate
