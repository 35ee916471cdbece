import numpy as np
import pytest

from kkholonomy import jets
from kkholonomy.catalog import flat_metric, get_scenario, sasakian_phi
from kkholonomy.fields import ScalarField, VectorField, constant_field
from kkholonomy.recurrent import (
    NotInScreenError,
    PreconditionError,
    ScreenBundle,
    build_recurrent_bundle,
    curvature_checks,
    d_table_checks,
    horizontal_annihilator_checks,
    prop_identity_checks,
    sasakian_axiom_checks,
    sasakian_curvature_checks,
    screen_checks,
    verify_recurrence,
)


def _failed(checks):
    return [c.as_dict() for c in checks if not c.passed]


@pytest.fixture(scope="module", params=["hopf-double", "hopf-double-neg", "torus-recurrent", "torus-recurrent-neg", "flat-torus"])
def scenario(request):
    return get_scenario(request.param)


def test_r_parallel_and_null(scenario):
    rb = scenario.build_recurrent()
    pts = scenario.points("total", 16)
    assert rb.parallel_residual(pts) < 1e-8
    G = rb.metric(pts)
    r = rb.r(pts)
    assert np.max(np.abs(np.einsum("bi,bij,bj->b", r, G, r))) < 1e-12


def test_identity_tables(scenario):
    rb = scenario.build_recurrent()
    pts = scenario.points("total", 12)
    bpts = scenario.points(scenario.recurrent_base_space(), 12)
    assert not _failed(prop_identity_checks(rb, bpts))
    assert not _failed(d_table_checks(rb, pts))
    assert not _failed(curvature_checks(rb, pts))
    assert not _failed(horizontal_annihilator_checks(rb, pts))
    assert not _failed(screen_checks(rb, pts))


def test_recurrence_scaling(scenario):
    rb = scenario.build_recurrent()
    pts = scenario.points("total", 12)
    omega, res = verify_recurrence(rb, ScalarField(lambda x: jets.exp(x[0]), dim=rb.dim), pts)
    assert res < 1e-8
    assert np.allclose(omega(pts), np.eye(rb.dim)[0])


def test_recurrence_rejects_vanishing_scale():
    sc = get_scenario("torus-recurrent")
    rb = sc.build_recurrent()
    pts = np.array([[0.0, 1.0, 1.0]])
    with pytest.raises(ValueError, match="vanishes"):
        verify_recurrence(rb, ScalarField(lambda x: x[0] * 1.0, dim=3), pts)


@pytest.mark.parametrize("eps", [1, -1])
def test_sasakian_degeneration(hopf_double, eps):
    rb = hopf_double.build_recurrent(eps)
    assert not _failed(sasakian_curvature_checks(rb, hopf_double.points("total", 12)))


def test_hopf_is_sasakian(hopf):
    kk = hopf.kk()
    assert not _failed(sasakian_axiom_checks(kk.metric, kk.v, sasakian_phi(kk), hopf.points("bundle", 12)))


def test_broken_killing_rejected():
    sc = get_scenario("broken-killing")
    with pytest.raises(PreconditionError) as info:
        sc.build_recurrent()
    assert info.value.condition == "xi is a Killing field"
    assert info.value.residual > 1.0


def test_non_unit_field_rejected():
    xi = constant_field([2.0, 0.0], 2, 1, 0)
    pts = np.array([[0.1, 0.2], [0.3, 0.4]])
    with pytest.raises(PreconditionError, match="g\\(xi, xi\\)"):
        build_recurrent_bundle(flat_metric(2), xi, 1, 1, None, pts)


def test_curved_a0_rejected():
    from kkholonomy.fields import OneForm

    xi = constant_field([1.0, 0.0], 2, 1, 0)
    a0 = OneForm(lambda x: [0.0, x[0]], dim=2)
    with pytest.raises(PreconditionError, match="flat"):
        build_recurrent_bundle(flat_metric(2), xi, 1, 1, a0, np.array([[0.1, 0.2]]))


def test_screen_map_rejects_non_orthogonal():
    sc = get_scenario("torus-recurrent")
    rb = sc.build_recurrent()
    sb = ScreenBundle(rb)
    W = VectorField(lambda x: [0.0, 0.0, 1.0], dim=3)  # v is not in r-perp
    with pytest.raises(NotInScreenError):
        sb.checked(W)(np.array([[0.1, 0.2, 0.3]]))


def test_epsilon_flip_changes_r():
    sc = get_scenario("torus-recurrent")
    p = np.array([[0.2, 0.4, 1.0]])
    r_pos = sc.build_recurrent(1).r(p)
    r_neg = sc.build_recurrent(-1).r(p)
    assert np.allclose(r_pos[0, -1], -r_neg[0, -1])
