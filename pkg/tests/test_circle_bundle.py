import numpy as np
import pytest

from kkholonomy.catalog import flat_metric, monopole_potential, sphere_metric
from kkholonomy.circle_bundle import (
    HorizontalLift,
    KKMetric,
    bracket_checks,
    integrality_check,
    kk_derivative_checks,
    phi_checks,
)
from kkholonomy.fields import OneForm, halton_points
from kkholonomy.levi_civita import Polyline, christoffel, riemann_tensor
from kkholonomy.recurrent import zero_form


@pytest.fixture(scope="module")
def hopf_kk():
    return KKMetric(sphere_metric(0.5), monopole_potential(1.0), -1)


def _pts(n=12):
    return halton_points([[-1, 1], [-1, 1], [0, 2 * np.pi]], n)


def test_fundamental_field_norm(hopf_kk):
    v = hopf_kk.v(_pts())
    G = hopf_kk.metric(_pts())
    assert np.allclose(np.einsum("bi,bij,bj->b", v, G, v), 1.0)  # g~(v, v) = -sigma


def test_hopf_total_space_is_round_unit_sphere(hopf_kk):
    g = hopf_kk.metric
    R = riemann_tensor(christoffel(g))(_pts())
    gv = g(_pts())
    model = np.einsum("li,bkj->blkij", np.eye(3), gv) - np.einsum("lj,bki->blkij", np.eye(3), gv)
    assert np.max(np.abs(R - model)) < 1e-11


@pytest.mark.parametrize("sigma", [1, -1])
def test_bracket_and_derivative_tables(hopf_kk, sigma):
    kk = KKMetric(sphere_metric(0.5), monopole_potential(1.0), sigma)
    checks = bracket_checks(kk, _pts()) + kk_derivative_checks(kk, _pts()) + phi_checks(kk, _pts()[:, :2])
    bad = [c.as_dict() for c in checks if not c.passed]
    assert not bad


def test_trivial_bundle_is_product():
    kk = KKMetric(flat_metric(2), zero_form(2), -1)
    assert np.allclose(kk.metric(np.array([0.3, 0.1, 2.0])), np.eye(3))


def test_horizontal_lift_solves_theta_equation():
    a = monopole_potential(1.0)
    base = Polyline(np.array([[(0.0, 0.0), (0.4, 0.0), (0.4, 0.4)]]))
    lift = HorizontalLift(base, a, theta0=0.2)
    # theta' = -a(x'): first leg along x with a_x = -q y/(1+r^2) = 0, second leg integrates -a_y dy
    expected = 0.2 - 0.4 * np.arctan(0.4 / np.sqrt(1 + 0.16)) / np.sqrt(1 + 0.16)
    assert lift.end_theta()[0] == pytest.approx(expected, abs=1e-12)


def test_integrality_charge_one():
    res = integrality_check(monopole_potential(1.0), monopole_potential(1.0))
    assert res.integral and res.nearest == 1 and res.deviation < 1e-4


def test_integrality_flags_scaled_potential():
    res = integrality_check(monopole_potential(1.3), monopole_potential(1.3))
    assert not res.integral
    assert res.value == pytest.approx(1.3, abs=1e-6)


def test_exact_potential_integrates_to_zero():
    exact = OneForm(lambda x: [2 * x[0], 3.0], dim=2)
    res = integrality_check(exact, exact)
    assert res.nearest == 0 and abs(res.value) < 1e-8
