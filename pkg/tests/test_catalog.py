import json

import numpy as np
import pytest

from kkholonomy.catalog import (
    UNIMPLEMENTED,
    ScenarioError,
    UnimplementedScenario,
    assemble_double_bundle,
    catalog,
    get_scenario,
    s2_transition_check,
    scenario_from_dict,
    scenario_names,
)
from kkholonomy.expressions import ExpressionError, compile_expression


def _observed_signature(metric, pts):
    eig = np.linalg.eigvalsh(metric(pts))
    return [int((eig < 0).sum(axis=1)[0]), int((eig > 0).sum(axis=1)[0])]


def test_catalog_contents():
    names = scenario_names()
    for needed in ["flat-torus", "hopf", "hopf-double", "torus-recurrent", "torus-recurrent-neg", "broken-killing"]:
        assert needed in names
    for sc in catalog():
        for key, exp in sc.expected.items():
            assert exp.source, f"{sc.name}:{key} lacks a source"


@pytest.mark.parametrize("name,sig", [("hopf-double", [1, 3]), ("flat-torus", [1, 3]), ("torus-recurrent", [1, 2]),
                                      ("hopf", [0, 3])])
def test_signatures(name, sig):
    sc = get_scenario(name)
    top = sc.top_metric()
    assert list(top.signature) == sig
    space = "total" if sc.recurrent else "bundle"
    assert _observed_signature(top, sc.points(space, 8)) == sig


def test_double_bundle_assembly(hopf):
    for eps in (1, -1):
        sc = assemble_double_bundle(hopf, eps)
        rb = sc.build_recurrent()
        assert rb.parallel_residual(sc.points("total", 12)) < 1e-8
        assert rb.sigma == 1


def test_double_bundle_sign_violation(hopf):
    sc = assemble_double_bundle(hopf, 1)
    sc.recurrent.sigma = -1
    with pytest.raises(ScenarioError, match="sign table"):
        sc.build_recurrent()


def test_flat_tower_curvature_zero():
    from kkholonomy.levi_civita import christoffel, riemann_tensor

    sc = get_scenario("flat-torus")
    R = riemann_tensor(christoffel(sc.top_metric()))(sc.points("total", 8))
    assert np.max(np.abs(R)) == 0.0


def test_s2_transition():
    checks = s2_transition_check()
    assert all(c.passed for c in checks), [c.as_dict() for c in checks]


def test_assembly_is_deterministic():
    a = get_scenario("hopf-double").top_metric()(np.array([0.1, 0.2, 0.3, 0.4]))
    b = get_scenario("hopf-double").top_metric()(np.array([0.1, 0.2, 0.3, 0.4]))
    assert np.array_equal(a, b)


def test_unimplemented_and_unknown():
    for name in UNIMPLEMENTED:
        with pytest.raises(UnimplementedScenario):
            get_scenario(name)
    with pytest.raises(ScenarioError):
        get_scenario("no-such-thing")


INLINE = {
    "name": "inline-torus",
    "base": {"coordinates": ["x", "y"], "metric": [[1, 0], [0, 1]], "box": [[0, 6.283], [0, 6.283]]},
    "killing": [1, 0],
    "sigma": 1,
    "recurrent": {"sigma": 1, "epsilon": -1, "potential": [0, "0.3"]},
    "expected": {"holonomy_dim": {"value": 0, "source": "flat"}},
}


def test_inline_scenario_matches_catalog():
    sc = scenario_from_dict(json.loads(json.dumps(INLINE)))
    ref = get_scenario("torus-recurrent-neg")
    p = np.array([0.3, 1.2, 2.0])
    assert np.allclose(sc.build_recurrent().metric(p), ref.build_recurrent().metric(p))


def test_inline_scenario_rejects_unknown_keys():
    bad = dict(INLINE, colour="red")
    with pytest.raises(ScenarioError, match="unknown keys"):
        scenario_from_dict(bad)
    bad = dict(INLINE, recurrent={"sigma": 1, "epsilon": 1, "twist": 2})
    with pytest.raises(ScenarioError):
        scenario_from_dict(bad)


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open('f')", "[x for x in y]", "lambda: 1", "x if y else 1"])
def test_expression_sandbox(text):
    with pytest.raises(ExpressionError):
        compile_expression(text, ["x", "y"])


def test_expression_values():
    f = compile_expression("sin(x)**2 + cos(x)**2 + y/2 - pi", ["x", "y"])
    assert f([0.3, 4.0]) == pytest.approx(3.0 - np.pi)
