"""Verification suites and machine-readable reports.

A report is a JSON document with sorted keys.  It contains only quantities
computed from the configuration, so two runs of the same configuration give
byte-identical files; wall-clock timings go to a separate sidecar file.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .catalog import (
    Scenario,
    ScenarioError,
    UnimplementedScenario,
    get_scenario,
    s2_transition_check,
    sasakian_phi,
    scenario_from_dict,
)
from .checks import Check, field_residual, max_abs
from .circle_bundle import (
    bracket_checks,
    kk_derivative_checks,
    phi_checks,
    test_frame,
)
from .config import DEFAULT_TOLERANCES, SUITES, ConfigError, RunConfig
from .expressions import ExpressionError
from .fields import (
    ScalarField,
    cartan_lie_derivative,
    exterior_derivative,
    lie_bracket,
    lie_derivative,
)
from .holonomy import (
    HolonomyError,
    LeviCivitaConnection,
    adapted_frame,
    ambrose_singer_generators,
    classify_block_structure,
    loop_holonomy,
    max_principal_angle,
    rectangle_loops,
    sample_box,
    screen_holonomy,
    skew_residual,
    straight_paths,
    transverse_holonomy,
    transverse_loop_holonomy,
    verify_transverse_holonomy_pullback,
)
from .levi_civita import (
    SingularMetricError,
    TransportConvergenceError,
    christoffel,
    metric_compatibility_residual,
    riemann_tensor,
)
from .recurrent import (
    PreconditionError,
    curvature_checks,
    d_table_checks,
    horizontal_annihilator_checks,
    metric_dual,
    precondition_checks,
    prop_identity_checks,
    sasakian_axiom_checks,
    sasakian_curvature_checks,
    screen_checks,
    verify_recurrence,
)
from . import jets

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INDETERMINATE = 0, 1, 2, 3

# estimator settings
LOOP_SIDE = 0.02
ANGLE_TOL = 1e-2
PULLBACK_TOL = 1e-7
FIBRE_TOL = 1e-9
BASE_HALF_WIDTH = 0.5
FIBRE_HALF_WIDTH = 1.0

# numerical failures that make a suite indeterminate rather than failed
NUMERICAL_ERRORS = (HolonomyError, TransportConvergenceError, SingularMetricError, np.linalg.LinAlgError)


class AnchorError(KeyError):
    pass


def anchor_table() -> frozenset[str]:
    text = resources.files("kkholonomy").joinpath("anchors.txt").read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


# entries -------------------------------------------------------------------------


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def residual_entry(check: Check, context: str) -> dict:
    return {
        "kind": "residual",
        "identity": check.name,
        "anchor": check.anchor,
        "context": context,
        "max_residual": _num(check.residual),
        "tolerance": float(check.tolerance),
        "passed": bool(check.passed),
    }


def value_entry(identity: str, anchor: str, context: str, observed, expected, source: str = "",
                passed: bool | None = None, indeterminate: bool = False) -> dict:
    if passed is None:
        passed = observed == expected
    out = {
        "kind": "value",
        "identity": identity,
        "anchor": anchor,
        "context": context,
        "observed": observed,
        "expected": expected,
        "source": source,
        "passed": bool(passed) and not indeterminate,
    }
    if indeterminate:
        out["indeterminate"] = True
    return out


def _tagged(checks, context) -> list[dict]:
    return [residual_entry(c, context) for c in checks]


def apply_override(entries: list[dict], tol: float | None) -> list[dict]:
    if tol is None:
        return entries
    for e in entries:
        if e["kind"] == "residual":
            e["tolerance"] = tol
            r = e["max_residual"]
            e["passed"] = isinstance(r, float) and r < tol
    return entries


def suite_status(entries: list[dict], error: str | None = None, indeterminate_error: bool = False) -> str:
    if error is not None:
        return "indeterminate" if indeterminate_error else "error"
    if any(not e["passed"] and not e.get("indeterminate") for e in entries):
        return "fail"
    if any(e.get("indeterminate") for e in entries):
        return "indeterminate"
    return "pass"


# shared run state ------------------------------------------------------------------


class RunContext:
    """Scenario, sampling sizes and lazily built stages for one run."""

    def __init__(self, sc: Scenario, grid: int, samples: int, loops: int):
        self.sc, self.grid, self.samples, self.loops = sc, grid, samples, loops
        self._rb = {}
        self.rejection: PreconditionError | None = None

    def rb(self, epsilon=None):
        """Recurrent stage for ``epsilon`` or None when its hypotheses fail."""
        if self.sc.recurrent is None:
            return None
        eps = self.sc.recurrent.epsilon if epsilon is None else epsilon
        if eps not in self._rb:
            try:
                self._rb[eps] = self.sc.build_recurrent(eps, grid=self.grid)
            except PreconditionError as exc:
                self.rejection = exc
                self._rb[eps] = None
        return self._rb[eps]

    def points(self, space: str, n: int | None = None):
        return self.sc.points(space, self.grid if n is None else n)

    def kk_stages(self):
        """(label, KKMetric, total points, base points) for every plain-KK view of a stage."""
        sc = self.sc
        out = []
        if sc.kk() is not None:
            out.append(("P1", sc.kk(), self.points("bundle"), self.points("base")))
        rb = self.rb()
        if rb is not None:
            label = "P2" if sc.bundle is not None else "P"
            out.append((label, rb.kk, self.points("total"), self.points(sc.recurrent_base_space())))
        return out

    def top(self):
        """(metric, space) of the highest stage that could be assembled."""
        rb = self.rb()
        if rb is not None:
            return rb.metric, "total"
        if self.sc.kk() is not None:
            return self.sc.kk().metric, "bundle"
        return self.sc.base_metric, "base"

    def eps_label(self, rb) -> str:
        return ("P2" if self.sc.bundle is not None else "P") + f" eps={rb.epsilon:+d}"


# suites ----------------------------------------------------------------------------


def _calculus_checks(dim: int, g, xi, points, tol: float = 1e-9) -> list[Check]:
    X, Y, Z = test_frame(dim)[-3:]
    jac = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) + lie_bracket(Z, lie_bracket(X, Y))
    alpha = metric_dual(g, test_frame(dim)[-1])
    dd = exterior_derivative(exterior_derivative(alpha))
    cartan = lie_derivative(alpha, X) - cartan_lie_derivative(alpha, X)
    out = [
        Check("Jacobi identity for vector fields", "formula itself is standard", field_residual([jac], points), tol),
        Check("d d alpha = 0", "L_ξ = d∘ι_ξ + ι_ξ∘d", field_residual([dd], points), tol),
        Check("Cartan formula L_X = d i_X + i_X d on 1-forms", "L_ξ = d∘ι_ξ + ι_ξ∘d", field_residual([cartan], points), tol),
    ]
    if xi is not None:
        out.append(Check("L_xi g = 0", "houses ξ, η = g(ξ,·)", field_residual([lie_derivative(g, xi)], points), tol))
    return out


def suite_brackets(ctx: RunContext) -> list[dict]:
    sc = ctx.sc
    out = []
    for label, kk, pts, bpts in ctx.kk_stages():
        out += _tagged(bracket_checks(kk, pts), label)
        out += _tagged(phi_checks(kk, bpts), label)
    out += _tagged(_calculus_checks(sc.base_metric.dim, sc.base_metric, sc.killing, ctx.points("base")), "B")
    if sc.atlas:
        out += _tagged(s2_transition_check(sc.atlas["radius"], sc.atlas["charge"]), "B atlas")
    return out


def _signature(metric, points):
    eig = np.linalg.eigvalsh(metric(points))
    sig = np.stack([(eig < 0).sum(axis=-1), (eig > 0).sum(axis=-1)], axis=-1)
    return [int(v) for v in sig[0]] if np.all(sig == sig[0]) else None


def _metric_entries(ctx: RunContext) -> list[dict]:
    sc = ctx.sc
    spaces = [("B", sc.base_metric, "base")]
    if sc.kk() is not None:
        spaces.append(("P1", sc.kk().metric, "bundle"))
    rb = ctx.rb()
    if rb is not None:
        spaces.append((ctx.eps_label(rb).split()[0], rb.metric, "total"))
    out = []
    for label, g, space in spaces:
        pts = ctx.points(space)
        out.append(residual_entry(
            Check("nabla g = 0", "Levi-Civita covariant derivative ∇", metric_compatibility_residual(g, christoffel(g), pts), 1e-10),
            label,
        ))
        obs = _signature(g, pts)
        out.append(value_entry("signature (negative, positive)", "called in the following Kaluza-Klein-metric", label,
                               obs, list(g.signature), "declared signature"))
    exp = sc.expected.get("signature")
    if exp is not None and spaces:
        label, g, space = spaces[-1]
        out.append(value_entry("signature of the top space", "called in the following Kaluza-Klein-metric", label,
                               _signature(g, ctx.points(space)), list(exp.value), exp.source))
    return out


def suite_d_table(ctx: RunContext) -> list[dict]:
    out = []
    for label, kk, pts, _ in ctx.kk_stages():
        out += _tagged(kk_derivative_checks(kk, pts), label)
    for eps in ctx.sc.epsilons():
        rb = ctx.rb(eps)
        if rb is not None:
            out += _tagged(d_table_checks(rb, ctx.points("total")), ctx.eps_label(rb))
    out += _metric_entries(ctx)
    return out


def _lowered(g, R, pts):
    return np.einsum("bml,blkij->bmkij", g(pts), R(pts))


def _riemann_checks(g, pts, K=None, tol: float = 1e-9) -> list[Check]:
    """Algebraic symmetries of R and, optionally, constant sectional curvature K."""
    R = riemann_tensor(christoffel(g))
    Rv = R(pts)
    Rl = _lowered(g, R, pts)
    out = [
        Check("R(X,Y) = -R(Y,X)", "Levi-Civita covariant derivative ∇", max_abs(Rv + np.swapaxes(Rv, -1, -2)), tol),
        Check("first Bianchi identity", "Levi-Civita covariant derivative ∇",
              max_abs(Rv + np.einsum("blijk->blkij", Rv) + np.einsum("bljki->blkij", Rv)), tol),
        Check("g(R(X,Y)Z, W) skew in (Z, W)", "Levi-Civita covariant derivative ∇", max_abs(Rl + np.swapaxes(Rl, 1, 2)), tol),
        Check("pair symmetry", "Levi-Civita covariant derivative ∇", max_abs(Rl - np.einsum("bmkij->bijmk", Rl)), tol),
    ]
    if K is not None:
        n = g.dim
        gv = g(pts)
        d = np.eye(n)
        model = K * (np.einsum("li,bkj->blkij", d, gv) - np.einsum("lj,bki->blkij", d, gv))
        out.append(Check(f"constant curvature {K:g}", "Levi-Civita covariant derivative ∇", max_abs(Rv - model), tol))
    return out


def suite_curvature(ctx: RunContext) -> list[dict]:
    sc = ctx.sc
    out = []
    for eps in sc.epsilons():
        rb = ctx.rb(eps)
        if rb is None:
            continue
        pts = ctx.points("total")
        out += _tagged(curvature_checks(rb, pts), ctx.eps_label(rb))
        if sc.sasakian:
            out += _tagged(sasakian_curvature_checks(rb, pts), ctx.eps_label(rb) + " Sasakian")
    top, space = ctx.top()
    K = sc.expected.get("constant_curvature")
    out += _tagged(_riemann_checks(top, ctx.points(space), None if K is None else float(K.value)), "top")
    return out


def _recurrence_scale(rb) -> ScalarField:
    return ScalarField(lambda x: jets.exp(x[0]), dim=rb.dim, name="exp(x^1)")


def suite_recurrent(ctx: RunContext) -> list[dict]:
    sc = ctx.sc
    out = []
    if sc.recurrent is not None:
        g, xi, sigma = sc.recurrent_base()
        bspace = sc.recurrent_base_space()
        bpts = ctx.points(bspace)
        a0 = sc.recurrent.potential() if sc.recurrent.potential else None
        out += _tagged(precondition_checks(g, xi, sigma, a0, bpts), "hypotheses")
        if sc.recurrent.sigma is not None:
            out.append(value_entry("stage sign matches g(xi, xi)", "Let g̃₂ be the metric π₂*g̃₁ − σA₂⊗A₂",
                                   "hypotheses", int(sigma), int(sc.recurrent.sigma), "sign table"))
        for eps in sc.epsilons():
            rb = ctx.rb(eps)
            if rb is None:
                exc = ctx.rejection
                out.append(residual_entry(
                    Check(f"recurrent stage assembled (rejected: {exc.condition})",
                          "admits then the parallel light-like vector field", exc.residual, exc.tolerance),
                    f"eps={eps:+d}",
                ))
                continue
            label = ctx.eps_label(rb)
            pts = ctx.points("total")
            out.append(residual_entry(Check("D r = 0", "admits then the parallel light-like vector field",
                                            rb.parallel_residual(pts), 1e-8), label))
            omega, res = verify_recurrence(rb, _recurrence_scale(rb), pts)
            dx1 = np.zeros(rb.dim)
            dx1[0] = 1.0
            out.append(residual_entry(Check("D(f r) = d ln f (x) f r for f = exp(x^1)", "ω = d(ln f)", res, 1e-8), label))
            out.append(residual_entry(Check("d ln f = dx^1", "ω = d(ln f)", max_abs(omega(pts) - dx1), 1e-10), label))
            out += _tagged(prop_identity_checks(rb, bpts), label)
            out += _tagged(horizontal_annihilator_checks(rb, pts), label)
            out += _tagged(screen_checks(rb, pts), label)
    if sc.sasakian and sc.kk() is not None:
        kk = sc.kk()
        out += _tagged(sasakian_axiom_checks(kk.metric, kk.v, sasakian_phi(kk), ctx.points("bundle")), "P1 Sasakian")
    return out


# holonomy --------------------------------------------------------------------------


def _half_widths(sc: Scenario, space: str) -> np.ndarray:
    nb = sc.base_metric.dim
    n = len(sc.box(space))
    return np.array([BASE_HALF_WIDTH] * nb + [FIBRE_HALF_WIDTH] * (n - nb))


def _dim_entry(identity, anchor, context, est, expected=None) -> dict:
    exp = None if expected is None else int(expected.value)
    src = "" if expected is None else expected.source
    passed = True if exp is None else est.dimension == exp
    return value_entry(identity, anchor, context, int(est.dimension), exp, src, passed,
                       indeterminate=not est.determinate)


def suite_holonomy(ctx: RunContext) -> tuple[list[dict], dict]:
    sc = ctx.sc
    out, block = [], {}
    rb = ctx.rb()
    top, space = ctx.top()
    o = sc.origin(space)
    samples = sample_box(o, _half_widths(sc, space), ctx.samples)
    conn = LeviCivitaConnection(top)
    as_est = ambrose_singer_generators(conn, o, samples)
    centers = [o] + list(samples[: ctx.loops - 1])
    lp_est = loop_holonomy(conn, o, h=LOOP_SIDE, centers=centers)
    block["point"] = [float(x) for x in o]
    block["ambrose_singer"] = as_est.summary()
    block["loop_log"] = lp_est.summary()
    exp = sc.expected.get("holonomy_dim")
    out.append(_dim_entry("dim hol (Ambrose-Singer)", "standard Ambrose–Singer realization of Hol", "top", as_est, exp))
    out.append(_dim_entry("dim hol (loop logarithms)", "cross-validation oracle for ambrose_singer_generators", "top", lp_est, exp))
    out.append(value_entry("estimators agree on dimension", "cross-validation oracle for ambrose_singer_generators", "top",
                           int(lp_est.dimension), int(as_est.dimension), "Ambrose-Singer estimate"))
    angle = max_principal_angle(as_est.basis, lp_est.basis) if as_est.dimension == lp_est.dimension else math.pi / 2
    out.append(residual_entry(Check("max principal angle between estimator spans",
                                    "cross-validation oracle for ambrose_singer_generators", angle, ANGLE_TOL), "top"))
    gram = top(o[None])[0]
    out.append(residual_entry(Check("generators are g-skew", "houses 𝔥𝔬𝔩^D_o", skew_residual(as_est.basis, gram), 1e-6), "top"))

    if rb is not None:
        out += _recurrent_holonomy(ctx, rb, o, as_est, block)
    for label, kk in ([("P1", sc.kk())] if sc.kk() is not None else []):
        out += _transverse_pullback(ctx, label, kk, block)
    return out, block


def _transverse_basis(sc: Scenario, rb, o_base):
    """Basis of xi-perp at the base point: lifts of the bottom coordinate vectors
    for a double bundle, otherwise from the projector."""
    if sc.kk() is None:
        return None
    kk = sc.kk()
    nb = sc.base_metric.dim
    a = kk.a(o_base[None, :nb])[0]
    return np.vstack([np.eye(nb), -a[None, :]])


def _recurrent_holonomy(ctx: RunContext, rb, o, as_est, block) -> list[dict]:
    sc = ctx.sc
    out = []
    nrb = rb.g.dim
    o_base = o[:nrb]
    E = _transverse_basis(sc, rb, o_base)
    frame = adapted_frame(rb, o, E)
    fc = frame.checks()
    out.append(residual_entry(Check("adapted frame: g(r,r), g(r,s), g(r~,s), g(r,r~) - 2 sigma",
                                    "For the decomposition T_oP = ⟨r_o⟩ ⊕ (ι𝒟)_o ⊕ ⟨r̃_o⟩",
                                    max(fc["g(r,r)"], fc["g(r,r~)-2sigma"], fc["g(r,s)"], fc["g(r~,s)"]), 1e-10), "frame"))
    bp = classify_block_structure(as_est, frame, check_phi=sc.sasakian)
    block["block_pattern"] = bp.as_dict()
    cells = [
        ("first column vanishes (hol annihilates r)", "R(·,·)r = 0", bp.first_column),
        ("last row vanishes", "For the decomposition T_oP = ⟨r_o⟩ ⊕ (ι𝒟)_o ⊕ ⟨r̃_o⟩", bp.last_row),
        ("screen block is skew for the screen metric", "is a sub-Lie-algebra of 𝔲((ι𝒟)_o)", bp.screen_skew),
    ]
    if bp.phi_commuting is not None:
        cells.append(("screen block commutes with phi", "is a sub-Lie-algebra of 𝔲((ι𝒟)_o)", bp.phi_commuting))
    out += [residual_entry(Check(n, a, v, 1e-6), "block pattern") for n, a, v in cells]

    # transverse holonomy g of the recurrent base, in the frame's screen basis
    g_est = transverse_holonomy(rb.tc, o_base, h=LOOP_SIDE, basis=frame.matrix[:nrb, 1:-1])
    block["transverse"] = g_est.summary()
    exp = sc.expected.get("transverse_holonomy_dim")
    out.append(_dim_entry("dim hol^D of the base (loop logarithms)", "Note Hol^𝒟_o the holonomy group", "base", g_est, exp))
    k = nrb - 1
    block["u_dimension"] = bp.u_dimension
    block["screen_dimension"] = bp.screen_dimension
    out.append(value_entry("screen block dimension <= dim g", "is a sub-Lie-algebra of 𝔲((ι𝒟)_o)", "containment",
                           bp.screen_dimension, int(g_est.dimension), "dim g", bp.screen_dimension <= g_est.dimension))
    out.append(value_entry("u-part dimension <= dim D", "is a sub-Lie-algebra of 𝔲((ι𝒟)_o)", "containment",
                           bp.u_dimension, k, "dim D", bp.u_dimension <= k))
    if sc.sasakian:
        out.append(value_entry("dim hol = dim g + dim D", "is a sub-Lie-algebra of 𝔲((ι𝒟)_o)", "equality",
                               int(as_est.dimension), int(g_est.dimension) + k, "dim g + dim D",
                               indeterminate=not (as_est.determinate and g_est.determinate)))

    # screen holonomy of the leaf through o
    leaf_samples = sample_box(o_base, _half_widths(sc, sc.recurrent_base_space()), ctx.samples)
    scr = screen_holonomy(rb, o, leaf_samples, frame)
    block["screen"] = scr.summary()
    out.append(_dim_entry("dim hol of the screen on the leaf", "l^𝒮_{o*}(𝔥𝔬𝔩^𝒟_{π(o)}) = 𝔥𝔬𝔩^{ℒ,𝒮}_o", "leaf", scr,
                          sc.expected.get("screen_holonomy_dim")))
    ang = max_principal_angle(scr.basis, g_est.basis) if scr.dimension == g_est.dimension else math.pi / 2
    out.append(value_entry("leaf screen holonomy dimension = dim hol^D", "l^𝒮_{o*}(𝔥𝔬𝔩^𝒟_{π(o)}) = 𝔥𝔬𝔩^{ℒ,𝒮}_o",
                           "leaf", int(scr.dimension), int(g_est.dimension), "dim hol^D",
                           indeterminate=not (scr.determinate and g_est.determinate)))
    out.append(residual_entry(Check("max principal angle, leaf screen holonomy vs hol^D",
                                    "l^𝒮_{o*}(𝔥𝔬𝔩^𝒟_{π(o)}) = 𝔥𝔬𝔩^{ℒ,𝒮}_o", ang, ANGLE_TOL), "leaf"))
    if sc.is_double:
        nb = sc.base_metric.dim
        bconn = LeviCivitaConnection(sc.base_metric)
        base = ambrose_singer_generators(bconn, o[:nb], sample_box(o[:nb], BASE_HALF_WIDTH, ctx.samples))
        block["bottom_base"] = base.summary()
        ang = max_principal_angle(scr.basis, base.basis) if scr.dimension == base.dimension else math.pi / 2
        out.append(value_entry("leaf screen holonomy dimension = dim hol of the bottom base",
                               "𝔥𝔬𝔩^{ℒ,𝒮}_o is isomorphic to 𝔥𝔬𝔩^∇_{π₁π₂(o)}", "double", int(scr.dimension),
                               int(base.dimension), "bottom base Ambrose-Singer",
                               indeterminate=not (scr.determinate and base.determinate)))
        out.append(residual_entry(Check("max principal angle, screen vs bottom base holonomy",
                                        "𝔥𝔬𝔩^{ℒ,𝒮}_o is isomorphic to 𝔥𝔬𝔩^∇_{π₁π₂(o)}", ang, ANGLE_TOL), "double"))
    return out


def _transverse_pullback(ctx: RunContext, label, kk, block) -> list[dict]:
    sc = ctx.sc
    nb = kk.g.dim
    ob = sc.origin("base")[:nb]
    theta0 = sc.origin("bundle")[nb]
    bconn = LeviCivitaConnection(kk.g)
    loops, _ = rectangle_loops(ob, [(i, j) for i in range(nb) for j in range(i + 1, nb)], 0.3, centers=[ob, ob + 0.2])
    rays = straight_paths(ob, sample_box(ob, 0.6, 8))
    res_l = verify_transverse_holonomy_pullback(kk, bconn, loops, theta0=theta0)
    res_r = verify_transverse_holonomy_pullback(kk, bconn, rays, theta0=theta0)
    tl = transverse_loop_holonomy(kk, np.r_[ob, theta0], h=LOOP_SIDE)
    base = ambrose_singer_generators(bconn, ob, sample_box(ob, BASE_HALF_WIDTH, ctx.samples))
    block[f"transverse_{label}"] = {"loop": tl.summary(), "base": base.summary()}
    ang = max_principal_angle(tl.basis, base.basis) if tl.dimension == base.dimension else math.pi / 2
    return [
        residual_entry(Check("transverse transport along horizontal lifts = lifted base transport",
                             "Hol_o^𝒟 = π*(Hol^∇_{π(o)})", max(res_l["pullback"], res_r["pullback"]), PULLBACK_TOL), label),
        residual_entry(Check("fibre loops act trivially on the horizontal bundle", "Hol_o^𝒟 = π*(Hol^∇_{π(o)})",
                             max(res_l["fibre"], res_r["fibre"]), FIBRE_TOL), label),
        _dim_entry("dim hol^D (loop logarithms)", "Hol_o^𝒟 = π*(Hol^∇_{π(o)})", label, tl,
                   sc.expected.get("transverse_holonomy_dim")),
        value_entry("dim hol^D = dim hol of the base", "Hol_o^𝒟 = π*(Hol^∇_{π(o)})", label, int(tl.dimension),
                    int(base.dimension), "base Ambrose-Singer", indeterminate=not (tl.determinate and base.determinate)),
        residual_entry(Check("max principal angle, hol^D vs base hol", "Hol_o^𝒟 = π*(Hol^∇_{π(o)})", ang, ANGLE_TOL), label),
    ]


_SUITE_FUNCS = {
    "brackets": suite_brackets,
    "d-table": suite_d_table,
    "curvature": suite_curvature,
    "recurrent": suite_recurrent,
    "holonomy": suite_holonomy,
}


# running ---------------------------------------------------------------------------


def resolve_scenario(definition) -> Scenario:
    try:
        if isinstance(definition, dict):
            return scenario_from_dict(definition)
        return get_scenario(definition)
    except (ScenarioError, UnimplementedScenario, ExpressionError) as exc:
        raise ConfigError(str(exc)) from None


def run_suite(ctx: RunContext, name: str, tol: float | None = None):
    """(suite record, holonomy block or None, elapsed seconds)."""
    t0 = time.perf_counter()
    error, numerical, block = None, False, None
    entries = []
    try:
        res = _SUITE_FUNCS[name](ctx)
        if isinstance(res, tuple):
            entries, block = res
        else:
            entries = res
    except NUMERICAL_ERRORS as exc:
        error, numerical = f"{type(exc).__name__}: {exc}", True
    except (ValueError, RuntimeError) as exc:
        error = f"{type(exc).__name__}: {exc}"
    entries = apply_override(entries, tol)
    check_anchors(entries)
    record = {
        "entries": entries,
        "status": suite_status(entries, error, numerical),
        "error": error,
        "tolerance_override": tol,
    }
    return record, block, time.perf_counter() - t0


def check_anchors(entries, table=None):
    table = anchor_table() if table is None else table
    for e in entries:
        if e["anchor"] not in table:
            raise AnchorError(f"entry {e['identity']!r} cites an anchor missing from the anchor table: {e['anchor']!r}")


def verdict(suites: dict) -> tuple[str, int]:
    statuses = [s["status"] for s in suites.values()]
    if any(s in ("fail", "error") for s in statuses):
        return "fail", EXIT_FAIL
    if any(s == "indeterminate" for s in statuses):
        return "indeterminate", EXIT_INDETERMINATE
    return "pass", EXIT_OK


def run(cfg: RunConfig, scenario: Scenario | None = None) -> tuple[dict, int, dict]:
    """Run the configured suites: (report, exit code, timings in seconds)."""
    sc = scenario or resolve_scenario(cfg.scenario)
    ctx = RunContext(sc, cfg.grid, cfg.samples, cfg.loops)
    suites, timings, holonomy = {}, {}, None
    for name in cfg.suites:
        rec, block, dt = run_suite(ctx, name, cfg.tolerances.get(name))
        suites[name] = rec
        timings[name] = dt
        if block is not None:
            holonomy = block
    verdict_str, code = verdict(suites)
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.echo(),
        "scenario": {
            "name": sc.name,
            "description": sc.description,
            "negative_control": sc.negative_control,
            "expected": {k: {"value": v.value, "source": v.source} for k, v in sorted(sc.expected.items())},
        },
        "suites": suites,
        "holonomy": holonomy,
        "partial": any(s["error"] is not None for s in suites.values()),
        "verdict": verdict_str,
        "exit_code": code,
    }
    if ctx.rejection is not None:
        report["scenario"]["rejected_precondition"] = ctx.rejection.condition
    return report, code, timings


# output ----------------------------------------------------------------------------


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_atomic(path: str | Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: dict, path: str | Path, timings: dict | None = None):
    write_atomic(path, dumps(report))
    if timings is not None:
        write_atomic(str(path) + ".timings.json",
                     json.dumps({k: round(v, 6) for k, v in timings.items()}, sort_keys=True, indent=2) + "\n")


RESIDUAL_HEADER = ("suite", "context", "identity", "grid", "max_residual")
SPECTRUM_HEADER = ("estimator", "index", "singular_value")


def grid_study(cfg: RunConfig, scenario: Scenario | None = None, levels=None) -> list[tuple]:
    """Residual entries re-run at grid N/4, N/2, N (holonomy excluded: it does not use the grid)."""
    sc = scenario or resolve_scenario(cfg.scenario)
    levels = levels or sorted({max(4, cfg.grid // 4), max(4, cfg.grid // 2), cfg.grid})
    rows = []
    for n in levels:
        ctx = RunContext(sc, n, cfg.samples, cfg.loops)
        for name in cfg.suites:
            if name == "holonomy":
                continue
            rec, _, _ = run_suite(ctx, name)
            for e in rec["entries"]:
                if e["kind"] == "residual":
                    rows.append((name, e["context"], e["identity"], n, e["max_residual"]))
    return rows


def _spectrum_rows(holonomy: dict | None) -> list[tuple]:
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            if "singular_values" in obj and "method" in obj:
                for i, s in enumerate(obj["singular_values"]):
                    rows.append((prefix, i, s))
                return
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])

    walk("", holonomy or {})
    return rows


def _tsv(header, rows) -> str:
    lines = ["\t".join(header)]
    for r in rows:
        lines.append("\t".join(repr(x) if isinstance(x, float) else str(x) for x in r))
    return "\n".join(lines) + "\n"


def emit_plot_data(report: dict, directory: str | Path, residual_rows=None) -> dict:
    """Write residuals.tsv and singular_values.tsv; returns the paths written."""
    directory = Path(directory)
    res_path = directory / "residuals.tsv"
    sv_path = directory / "singular_values.tsv"
    if residual_rows is None:
        grid = report["config"]["grid"]
        residual_rows = [
            (name, e["context"], e["identity"], grid, e["max_residual"])
            for name, suite in report["suites"].items()
            for e in suite["entries"]
            if e["kind"] == "residual"
        ]
    write_atomic(res_path, _tsv(RESIDUAL_HEADER, residual_rows))
    write_atomic(sv_path, _tsv(SPECTRUM_HEADER, _spectrum_rows(report.get("holonomy"))))
    return {"residuals": str(res_path), "singular_values": str(sv_path)}


def summary_lines(report: dict) -> list[str]:
    lines = [f"scenario {report['scenario']['name']}: {report['verdict']}"]
    for name, suite in report["suites"].items():
        n = len(suite["entries"])
        bad = sum(not e["passed"] for e in suite["entries"])
        extra = f" ({suite['error']})" if suite["error"] else ""
        lines.append(f"  {name:<10} {suite['status']:<13} {n - bad}/{n} passed{extra}")
        for e in suite["entries"]:
            if not e["passed"]:
                val = e.get("max_residual", e.get("observed"))
                ref = e.get("tolerance", e.get("expected"))
                lines.append(f"    [{e['context']}] {e['identity']}: {val} vs {ref}")
    return lines


__all__ = [
    "SCHEMA_VERSION", "DEFAULT_TOLERANCES", "SUITES", "run", "run_suite", "write_report", "emit_plot_data",
    "grid_study", "dumps", "summary_lines", "anchor_table",
]
