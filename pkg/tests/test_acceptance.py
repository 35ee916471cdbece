"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records a PASS/FAIL line (printed immediately and repeated in the
pytest terminal summary).  Run standalone with ``pytest tests/test_acceptance.py -s``.
"""
import subprocess
import sys

import numpy as np

from conftest import record_criterion
from kkholonomy import jets
from kkholonomy.catalog import get_scenario, monopole_potential
from kkholonomy.circle_bundle import bracket_checks, integrality_check, kk_derivative_checks
from kkholonomy.config import RunConfig
from kkholonomy.fields import ScalarField
from kkholonomy.recurrent import (
    PreconditionError,
    curvature_checks,
    prop_identity_checks,
    sasakian_curvature_checks,
    verify_recurrence,
)
from kkholonomy.report import run

GRID = 16
RECURRENT = ["flat-torus", "hopf-double", "hopf-double-neg", "torus-recurrent", "torus-recurrent-neg"]


def _worst(checks):
    c = max(checks, key=lambda c: c.residual / c.tolerance)
    return c.residual, c.name


def _kk_stages(name):
    sc = get_scenario(name)
    out = []
    if sc.kk() is not None:
        out.append((sc.kk(), sc.points("bundle", GRID)))
    if sc.recurrent is not None:
        out.append((sc.build_recurrent().kk, sc.points("total", GRID)))
    return out


def _holonomy(name):
    report, code, _ = run(RunConfig(scenario=name, suites=["holonomy"]))
    return report, code


def test_criterion_01_brackets():
    worst = 0.0
    for name in ["flat-torus", "hopf"]:
        for kk, pts in _kk_stages(name):
            checks = bracket_checks(kk, pts, tol=1e-9)
            worst = max(worst, max(c.residual for c in checks))
    ok = worst < 1e-9
    record_criterion(1, "bracket identities on flat-torus and Hopf < 1e-9", ok, f"max {worst:.1e}")
    assert ok


def test_criterion_02_kk_derivative_table():
    table, lemma = 0.0, 0.0
    lemma_names = {"g~(v, v) = -sigma", "v is Killing for g~"}
    three = {"D_v v = 0", "D_v X~ = (phi X)~", "D_X~ v = (phi X)~", "D_X~ Y~ = (nabla_X Y)~ + (i/2) Omega(X,Y) v"}
    for name in ["flat-torus", "hopf", "hopf-double"]:
        for kk, pts in _kk_stages(name):
            for c in kk_derivative_checks(kk, pts):
                if c.name in lemma_names:
                    lemma = max(lemma, c.residual)
                elif c.name in three:
                    table = max(table, c.residual)
    ok = table < 1e-8 and lemma < 1e-10
    record_criterion(2, "KK derivative table < 1e-8, g~(v,v)+sigma and L_v g~ < 1e-10", ok,
                     f"table {table:.1e}, lemma {lemma:.1e}")
    assert ok


def test_criterion_03_recurrent_construction():
    worst = 0.0
    for name in RECURRENT:
        sc = get_scenario(name)
        for eps in (1, -1):
            rb = sc.build_recurrent(eps, grid=GRID)
            worst = max(worst, rb.parallel_residual(sc.points("total", GRID)))
    try:
        get_scenario("broken-killing").build_recurrent()
        rejected = None
    except PreconditionError as exc:
        rejected = exc.condition
    ok = worst < 1e-8 and rejected == "xi is a Killing field"
    record_criterion(3, "|D r| < 1e-8 for both eps on all recurrent scenarios; non-Killing xi rejected", ok,
                     f"max {worst:.1e}, rejection: {rejected}")
    assert ok


def test_criterion_04_recurrence_scaling():
    worst = 0.0
    for name in RECURRENT:
        sc = get_scenario(name)
        rb = sc.build_recurrent()
        f = ScalarField(lambda x: jets.exp(x[0]), dim=rb.dim)
        pts = sc.points("total", GRID)
        omega, res = verify_recurrence(rb, f, pts)
        worst = max(worst, res, float(np.max(np.abs(omega(pts) - np.eye(rb.dim)[0]))))
    ok = worst < 1e-8
    record_criterion(4, "D(f r) - dx^1 (x) f r < 1e-8 for f = exp(x^1)", ok, f"max {worst:.1e}")
    assert ok


def test_criterion_05_identity_suite():
    worst, where = 0.0, ""
    for name in RECURRENT:
        sc = get_scenario(name)
        for eps in (1, -1):
            rb = sc.build_recurrent(eps)
            res, nm = _worst(prop_identity_checks(rb, sc.points(sc.recurrent_base_space(), GRID), tol=1e-8))
            if res >= worst:
                worst, where = res, nm
    ok = worst < 1e-8
    record_criterion(5, "identity suite (phi, Omega, Lie derivatives, L_{phi X} eta) < 1e-8", ok,
                     f"max {worst:.1e} ({where})")
    assert ok


def test_criterion_06_curvature_table():
    table, sas = 0.0, 0.0
    for name in RECURRENT:
        sc = get_scenario(name)
        for eps in (1, -1):
            rb = sc.build_recurrent(eps)
            pts = sc.points("total", GRID)
            table = max(table, max(c.residual for c in curvature_checks(rb, pts)))
            if sc.sasakian:
                sas = max(sas, max(c.residual for c in sasakian_curvature_checks(rb, pts)))
    ok = table < 1e-7 and sas < 1e-7
    record_criterion(6, "curvature table < 1e-7; Sasakian degeneration < 1e-7", ok, f"table {table:.1e}, Sasakian {sas:.1e}")
    assert ok


def test_criterion_07_transverse_pullback():
    report, _ = _holonomy("hopf")
    entries = report["suites"]["holonomy"]["entries"]
    pull = next(e for e in entries if e["identity"].startswith("transverse transport"))["max_residual"]
    fibre = next(e for e in entries if e["identity"].startswith("fibre loops"))["max_residual"]
    ok = pull < 1e-7 and fibre < 1e-9
    record_criterion(7, "transverse transport pullback < 1e-7; fibre loops trivial < 1e-9", ok,
                     f"pullback {pull:.1e}, fibre {fibre:.1e}")
    assert ok


def test_criterion_08_holonomy_dimensions():
    flat, _ = _holonomy("flat-torus")
    s2, _ = _holonomy("round-s2")
    hd, code = _holonomy("hopf-double")
    d_flat = flat["holonomy"]["ambrose_singer"]["dimension"]
    d_s2 = s2["holonomy"]["ambrose_singer"]["dimension"]
    a, lp = hd["holonomy"]["ambrose_singer"], hd["holonomy"]["loop_log"]
    entries = hd["suites"]["holonomy"]["entries"]
    angle = next(e for e in entries if e["identity"] == "max principal angle between estimator spans")["max_residual"]
    bp = hd["holonomy"]["block_pattern"]
    viol = max(bp["first_column"], bp["last_row"], bp["screen_skew"], bp["phi_commuting"])
    ok = (d_flat == 0 and d_s2 == 1 and a["dimension"] == 3 and lp["dimension"] == 3
          and a["gap_ratio"] >= 1e3 and lp["gap_ratio"] >= 1e3 and angle < 1e-2 and viol < 1e-6)
    record_criterion(8, "holonomy dims flat 0, S^2 1, Hopf double 3 (gap >= 1e3, estimators agree), block pattern < 1e-6",
                     ok, f"dims {d_flat}/{d_s2}/{a['dimension']}+{lp['dimension']}, gap {min(a['gap_ratio'], lp['gap_ratio']):.1e}, "
                         f"angle {angle:.1e}, block {viol:.1e}")
    assert ok


def test_criterion_09_screen_holonomy():
    hd, _ = _holonomy("hopf-double")
    entries = hd["suites"]["holonomy"]["entries"]
    dim_eq = next(e for e in entries if e["identity"] == "leaf screen holonomy dimension = dim hol of the bottom base")
    angle = next(e for e in entries if e["identity"] == "max principal angle, screen vs bottom base holonomy")["max_residual"]
    ok = dim_eq["passed"] and angle < 1e-2
    record_criterion(9, "screen holonomy on the leaf ~ base holonomy (equal dimension, angles < 1e-2)", ok,
                     f"dims {dim_eq['observed']}/{dim_eq['expected']}, angle {angle:.1e}")
    assert ok


def test_criterion_10_integrality():
    one = integrality_check(monopole_potential(1.0), monopole_potential(1.0))
    scaled = integrality_check(monopole_potential(1.3), monopole_potential(1.3))
    ok = abs(one.value - 1.0) < 1e-4 and not scaled.integral
    record_criterion(10, "charge-1 monopole integrates to 1 +- 1e-4; scaled potential flagged", ok,
                     f"{one.value:.12f}, scaled {scaled.value:.6f}")
    assert ok


def test_criterion_11_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        proc = subprocess.run([sys.executable, "-m", "kkholonomy", "--scenario", "hopf-double", "--suite", "all",
                               "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1]
    record_criterion(11, "two runs of verify --scenario hopf-double --suite all are byte-identical", ok,
                     f"{len(outs[0])} bytes")
    assert ok
