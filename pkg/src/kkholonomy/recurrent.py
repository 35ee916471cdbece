"""Kaluza-Klein bundles carrying a parallel light-like field.

Given a unit Killing field xi (g(xi, xi) = sigma) and a flat potential a0 on
the base, the twisted potential

    a = a0 + sigma * epsilon * eta,     eta = g(xi, .)

makes r = xi~ + epsilon v parallel for the Kaluza-Klein metric.  In the
imaginary notation this is A = A0 + i sigma epsilon pi*eta and
Omega = i sigma epsilon d(eta); the sign follows from
d(eta)(X, Y) = 2 g(nabla_X xi, Y) for a Killing field.
"""
from __future__ import annotations

import numpy as np

from . import jets
from .checks import Check, field_residual, max_abs
from .circle_bundle import BundleChart, KKMetric, test_frame
from .fields import (
    EndomorphismField,
    MetricField,
    OneForm,
    ScalarField,
    TensorField,
    VectorField,
    apply,
    cartan_lie_derivative,
    compose,
    constant_field,
    contract,
    evaluate_form,
    exterior_derivative,
    interior,
    lie_derivative,
    make_field,
    pair,
)
from .levi_civita import (
    TransverseConnection,
    christoffel,
    covariant_along,
    covariant_derivative,
    killing_residual,
    nabla,
    riemann_tensor,
)


class PreconditionError(ValueError):
    """A hypothesis of the recurrent construction fails on the sample grid."""

    def __init__(self, condition: str, residual: float, tolerance: float):
        super().__init__(f"precondition '{condition}' violated: residual {residual:.3e} > {tolerance:.1e}")
        self.condition = condition
        self.residual = residual
        self.tolerance = tolerance


def zero_form(dim: int) -> OneForm:
    return constant_field(np.zeros(dim), dim, 0, 1, name="0")


def metric_dual(g: MetricField, X: VectorField) -> OneForm:
    return contract("ij,j->i", g, X, up=0, down=1, cls=OneForm)


def inner(g: MetricField, X: VectorField, Y: VectorField) -> ScalarField:
    return contract("ij,i,j->", g, X, Y, up=0, down=0)


class RecurrentBundle:
    """Circle bundle over (B, g) with potential a0 + sigma eps eta and its special fields."""

    def __init__(self, g: MetricField, xi: VectorField, sigma: int, epsilon: int, a0: OneForm | None = None,
                 name: str = "P"):
        if epsilon not in (1, -1) or sigma not in (1, -1):
            raise ValueError("sigma and epsilon must be +1 or -1")
        self.g, self.xi = g, xi
        self.sigma, self.epsilon = int(sigma), int(epsilon)
        self.a0 = a0 if a0 is not None else zero_form(g.dim)
        self.eta = metric_dual(g, xi)
        self.a = self.a0 + self.eta * float(sigma * epsilon)
        self.kk = KKMetric(g, self.a, sigma, name=name)
        self.flat_chart = BundleChart(self.a0, name=name)
        self.dim = self.kk.dim
        self.v = self.kk.v
        xi_bar = self.kk.lift(xi)
        self.r = xi_bar + self.v * float(epsilon)
        self.r_tilde = xi_bar - self.v * float(epsilon)
        self.phi = self.kk.phi
        self.tc = TransverseConnection(g, xi, sigma)
        self._riemann = None

    @property
    def metric(self) -> MetricField:
        return self.kk.metric

    @property
    def gamma(self):
        return self.kk.gamma

    @property
    def riemann(self) -> TensorField:
        if self._riemann is None:
            self._riemann = riemann_tensor(self.gamma)
        return self._riemann

    def lift(self, X: VectorField) -> VectorField:
        return self.kk.lift(X)

    def iota(self, X: VectorField) -> VectorField:
        """Horizontal lift for the flat connection; iota(xi) = r."""
        return self.flat_chart.lift(X)

    def D(self, X: VectorField, Y: VectorField) -> VectorField:
        return covariant_derivative(self.gamma, X, Y)

    def transverse_frame(self) -> list[VectorField]:
        """Sections of D = xi-perp on the base: projected coordinate and test fields."""
        return [self.tc.project(X) for X in test_frame(self.g.dim)]

    def curvature(self, X: VectorField, Y: VectorField, Z: VectorField) -> VectorField:
        return contract("lkij,k,i,j->l", self.riemann, Z, X, Y, up=1, down=0)

    def curvature_endomorphism(self, X: VectorField, Y: VectorField) -> EndomorphismField:
        return contract("lkij,i,j->lk", self.riemann, X, Y, up=1, down=1)

    def parallel_residual(self, points) -> float:
        return field_residual([nabla(self.gamma, self.r)], points)

    def grid(self, base_points, thetas=None) -> np.ndarray:
        base_points = np.atleast_2d(base_points)
        if thetas is None:
            thetas = np.linspace(0.0, 2 * np.pi, len(base_points), endpoint=False)
        return self.kk.grid(base_points, thetas)


def precondition_checks(g: MetricField, xi: VectorField, sigma: int, a0: OneForm | None, base_points,
                        killing_tol: float = 1e-9, unit_tol: float = 1e-10, flat_tol: float = 1e-10) -> list[Check]:
    a0 = a0 if a0 is not None else zero_form(g.dim)
    unit = inner(g, xi, xi)(base_points) - sigma
    return [
        Check("xi is a Killing field", "admits then the parallel light-like vector field",
              killing_residual(g, xi, base_points), killing_tol),
        Check("g(xi, xi) = sigma", "admits then the parallel light-like vector field", max_abs(unit), unit_tol),
        Check("A0 is flat", "admits a flat connection A₀", field_residual([exterior_derivative(a0)], base_points), flat_tol),
    ]


def build_recurrent_bundle(g: MetricField, xi: VectorField, sigma: int, epsilon: int, a0: OneForm | None,
                           base_points, *, name: str = "P", killing_tol: float = 1e-9, unit_tol: float = 1e-10,
                           flat_tol: float = 1e-10, parallel_tol: float = 1e-8) -> RecurrentBundle:
    """Validate the hypotheses on ``base_points`` and assemble the bundle.

    Raises :class:`PreconditionError` naming the first violated hypothesis, or
    the parallelism of r if that fails on the lifted grid.
    """
    base_points = np.atleast_2d(base_points)
    for c in precondition_checks(g, xi, sigma, a0, base_points, killing_tol, unit_tol, flat_tol):
        if not c.passed:
            raise PreconditionError(c.name, c.residual, c.tolerance)
    rb = RecurrentBundle(g, xi, sigma, epsilon, a0, name=name)
    res = rb.parallel_residual(rb.grid(base_points))
    if not res < parallel_tol:
        raise PreconditionError("D r = 0", res, parallel_tol)
    return rb


# identity suites ---------------------------------------------------------------


def verify_recurrence(rb: RecurrentBundle, f: ScalarField, points):
    """For R = f r check D R = d(ln f) (x) R; returns (omega, max residual)."""
    fv = f(points)
    if np.any(np.abs(fv) < 1e-12) or not np.all(np.isfinite(fv)):
        bad = int(np.argmin(np.abs(fv)))
        raise ValueError(f"f vanishes at point {np.atleast_2d(points)[bad].tolist()}")
    omega = make_field(0, 1, f.dim, lambda pts, order: _dlog(f, pts, order), name="d ln f", cls=OneForm)
    R = rb.r * f
    DR = nabla(rb.gamma, R)
    res = contract("ki->ki", DR, up=1, down=1) - contract("k,i->ki", R, omega, up=1, down=1)
    return omega, field_residual([res], points)


def _dlog(f: ScalarField, pts, order):
    """d(ln |f|) = df / f."""
    F = f.taylor(pts, order + 1)
    return F.grad() * jets.reciprocal(F.truncate(order))[:, None]


def prop_identity_checks(rb: RecurrentBundle, base_points, tol: float = 1e-8) -> list[Check]:
    """Consequences of the recurrent construction on the base."""
    g, xi, phi, eps, sigma = rb.g, rb.xi, rb.phi, rb.epsilon, rb.sigma
    eta = rb.eta
    deta = exterior_derivative(eta)
    da = rb.kk.curvature
    nxi = contract("ij->ij", nabla(rb.kk.base_gamma, xi), up=1, down=1, cls=EndomorphismField)
    L_phi = lie_derivative(phi, xi)
    nabla_xi_phi = covariant_along(rb.kk.base_gamma, phi, xi)
    frame = test_frame(g.dim)
    lemma = []
    for X in frame:
        pX = apply(phi, X)
        lie_eta = lie_derivative(eta, pX)
        lemma.append(lie_eta - contract("ij,i->j", deta, pX, up=0, down=1, cls=OneForm))
    cartan = cartan_lie_derivative(eta, xi) - lie_derivative(eta, xi)
    return [
        Check("phi xi = 0", "φξ = 0", field_residual([apply(phi, xi)], base_points), tol),
        Check("Omega(xi, .) = 0", "Ω(ξ,·) = 0", field_residual([interior(xi, da)], base_points), tol),
        Check("phi = -eps nabla xi", "φ = −ε∇ξ", field_residual([phi + nxi * float(eps)], base_points), tol),
        Check("Omega = i sigma eps d eta", "Ω = −iσε dη", field_residual([da - deta * float(sigma * eps)], base_points), tol),
        Check("L_xi eta = 0", "L_ξ η = 0, L_ξ dη = 0", field_residual([lie_derivative(eta, xi)], base_points), tol),
        Check("L_xi d eta = 0", "L_ξ η = 0, L_ξ dη = 0", field_residual([lie_derivative(deta, xi)], base_points), tol),
        Check("L_xi phi = 0", "L_ξ φ = 0, ∇_ξ φ = 0", field_residual([L_phi], base_points), tol),
        Check("nabla_xi phi = 0", "L_ξ φ = 0, ∇_ξ φ = 0", field_residual([nabla_xi_phi], base_points), tol),
        Check("(L_{phi X} eta)(Y) = d eta(phi X, Y)", "(L_{φX} η)(Y) = dη(φX,Y)", field_residual(lemma, base_points), tol),
        Check("Cartan formula for L_xi eta", "L_ξ = d∘ι_ξ + ι_ξ∘d", field_residual([cartan], base_points), 1e-9),
    ]


def verify_prop_identities(rb: RecurrentBundle, base_points, tol: float = 1e-8) -> list[Check]:
    return prop_identity_checks(rb, base_points, tol)


def _sum(fields):
    out = fields[0]
    for f in fields[1:]:
        out = out + f
    return out


def d_table_checks(rb: RecurrentBundle, points, tol: float = 1e-8) -> list[Check]:
    """Levi-Civita derivatives of r, r~ and lifts of transverse sections."""
    D, lift, eps, v = rb.D, rb.lift, float(rb.epsilon), rb.v
    r, rt, tc = rb.r, rb.r_tilde, rb.tc
    frame = rb.transverse_frame()
    lifts = [lift(X) for X in frame]
    da = rb.kk.curvature
    res_rY = [D(r, LY) - lift(tc.derivative(rb.xi, Y)) for Y, LY in zip(frame, lifts)]
    res_XY = []
    for X, LX in zip(frame, lifts):
        for Y, LY in zip(frame, lifts):
            coef = rb.kk.chart.pullback(evaluate_form(da, X, Y)) * (-0.5 * eps)
            res_XY.append(D(LX, LY) - lift(tc.derivative(X, Y)) - r * coef)
    res_Xrt = [D(LX, rt) + lift(apply(rb.phi, X)) * (2 * eps) for X, LX in zip(frame, lifts)]
    res_vY = [D(v, LY) - lift(apply(rb.phi, Y)) for Y, LY in zip(frame, lifts)]
    return [
        Check("D r = 0", "D r = 0", field_residual([nabla(rb.gamma, r)], points), tol),
        Check("D_r Y~ = (nabla^D_xi Y)~", "D_r Ȳ = (∇^𝒟_ξ Y)̄", field_residual(res_rY, points), tol),
        Check("D_r r~ = 0", "D_r r̃ = 0", field_residual([D(r, rt)], points), tol),
        Check("D_X~ Y~ = (nabla^D_X Y)~ + eps (i/2) Omega(X,Y) r", "D_{X̄} Ȳ = (∇^𝒟_X Y)̄ + ε(i/2)Ω(X,Y) r",
              field_residual(res_XY, points), tol),
        Check("D_X~ r~ = -2 eps (phi X)~", "D_{X̄} r̃ = −2ε(φX)̄", field_residual(res_Xrt, points), tol),
        Check("D_v Y~ = (phi Y)~", "D_v Ȳ = (φY)̄", field_residual(res_vY, points), tol),
        Check("D_v r~ = 0", "D_v r̃ = 0", field_residual([D(v, rt)], points), tol),
    ]


def verify_D_table(rb: RecurrentBundle, points, tol: float = 1e-8) -> list[Check]:
    return d_table_checks(rb, points, tol)


def curvature_checks(rb: RecurrentBundle, points, tol: float = 1e-7, frame=None) -> list[Check]:
    """Curvature of D on lifted transverse sections, r, r~ and v."""
    eps, sigma = float(rb.epsilon), float(rb.sigma)
    R, lift, tc, phi = rb.curvature, rb.lift, rb.tc, rb.phi
    r, rt, v, xi = rb.r, rb.r_tilde, rb.v, rb.xi
    frame = frame or rb.transverse_frame()[: rb.g.dim]
    lifts = [lift(X) for X in frame]
    g = rb.g
    pull = rb.kk.chart.pullback
    dphi = lambda X, Y: tc.endomorphism_derivative(X, phi, Y)

    Rr = contract("lkij,k->lij", rb.riemann, r, up=1, down=2)
    Rrv = rb.curvature_endomorphism(r, v)
    r_rXY, r_rXrt, r_XYZ, r_XYrt, r_XvY, r_Xvrt = [], [], [], [], [], []
    for X, LX in zip(frame, lifts):
        r_rXrt.append(R(r, LX, rt))
        r_Xvrt.append(R(LX, v, rt) - lift(apply(compose(phi, phi), X)) * (2 * eps))
        for Y, LY in zip(frame, lifts):
            r_rXY.append(R(r, LX, LY) - lift(tc.curvature(xi, X, Y)))
            skew = dphi(X, Y) - dphi(Y, X)
            r_XYrt.append(R(LX, LY, rt) + lift(skew) * (2 * eps))
            gpp = pull(inner(g, apply(phi, X), apply(phi, Y)))
            r_XvY.append(R(LX, v, LY) - lift(dphi(X, Y)) - r * (gpp * (eps * sigma)))
            for Z, LZ in zip(frame, lifts):
                coef = pull(inner(g, skew, Z)) * (sigma * eps)
                r_XYZ.append(R(LX, LY, LZ) - lift(tc.curvature(X, Y, Z)) - r * coef)
    return [
        Check("R(.,.) r = 0", "R(·,·)r = 0", field_residual([Rr], points), tol),
        Check("R(r,X~)Y~ = (R^D(xi,X)Y)~", "R(r,X̄)Ȳ = (R^𝒟(ξ,X)Y)̄", field_residual(r_rXY, points), tol),
        Check("R(r,X~) r~ = 0", "R(r,X̄)r̃ = 0", field_residual(r_rXrt, points), tol),
        Check("R(X~,Y~)Z~ = (R^D(X,Y)Z)~ + sigma eps g((nabla^D_X phi)Y - (nabla^D_Y phi)X, Z) r",
              "R(X̄,Ȳ)Z̄ = (R^𝒟(X,Y)Z)̄ + σε g((∇^𝒟_Xφ)Y − (∇^𝒟_Yφ)X, Z) r", field_residual(r_XYZ, points), tol),
        Check("R(X~,Y~) r~ = -2 eps ((nabla^D_X phi)Y - (nabla^D_Y phi)X)~",
              "R(X̄,Ȳ)r̃ = −2ε((∇^𝒟_Xφ)Y − (∇^𝒟_Yφ)X)̄", field_residual(r_XYrt, points), tol),
        Check("R(r, v) = 0", "R(r,v) = 0", field_residual([Rrv], points), tol),
        Check("R(X~,v)Y~ = ((nabla^D_X phi)Y)~ + eps sigma g(phi X, phi Y) r",
              "R(X̄,v)Ȳ = ((∇^𝒟_Xφ)Y)̄ + εσ g(φX,φY) r", field_residual(r_XvY, points), tol),
        Check("R(X~,v) r~ = 2 eps (phi^2 X)~", "R(X̄,v)r̃ = 2ε(φ²X)̄", field_residual(r_Xvrt, points), tol),
    ]


def orthonormal_transverse_frame(rb: RecurrentBundle) -> list[VectorField]:
    """Gram-Schmidt orthonormalisation (for g restricted to xi-perp) of the projected coordinate fields.

    Only valid where the restricted metric is definite.
    """
    g, n = rb.g, rb.g.dim
    P = rb.tc.projector

    def taylor(pts, order):
        G = g.taylor(pts, order)
        Pj = P.taylor(pts, order)
        basis = []
        for i in range(n):
            w = Pj[:, :, i]
            for b in basis:
                w = w - jets.einsum("bi,bij,bj->b", w, G, b)[:, None] * b
            nrm = jets.einsum("bi,bij,bj->b", w, G, w)
            if np.min(np.abs(nrm.value)) < 1e-10:
                continue
            basis.append(w * jets.reciprocal(jets.sqrt(nrm))[:, None])
        if len(basis) != n - 1:
            raise ValueError("could not build an orthonormal transverse frame")
        return jets.stack(basis + [0.0 * basis[0]], axis=-1)  # padded to a square array

    F = make_field(1, 1, n, taylor, name="onb")
    e = []
    for k in range(n - 1):
        e.append(make_field(1, 0, n, lambda pts, order, k=k: F.taylor(pts, order)[:, :, k], name=f"e{k}"))
    return e


def sasakian_curvature_checks(rb: RecurrentBundle, points, tol: float = 1e-7) -> list[Check]:
    """Degenerate curvature table over a Sasakian base, on an orthonormal transverse frame.

    For eps = 1 this is R(X~,v)Y~ = g(X,Y) r and R(X~,v)r~ = -2 X~; for
    eps = -1 both right-hand sides change sign (phi = -eps nabla xi).
    """
    R, lift, r, rt, v = rb.curvature, rb.lift, rb.r, rb.r_tilde, rb.v
    eps = float(rb.epsilon)
    frame = orthonormal_transverse_frame(rb)
    lifts = [lift(X) for X in frame]
    g, pull = rb.g, rb.kk.chart.pullback
    r_XvY, r_Xvrt, r_XYrt, r_XYZ, r_r = [], [], [], [], []
    for X, LX in zip(frame, lifts):
        r_Xvrt.append(R(LX, v, rt) + LX * (2.0 * eps))
        r_r.append(rb.curvature_endomorphism(r, LX))
        for Y, LY in zip(frame, lifts):
            r_XvY.append(R(LX, v, LY) - r * (pull(inner(g, X, Y)) * eps))
            r_XYrt.append(R(LX, LY, rt))
            for Z, LZ in zip(frame, lifts):
                r_XYZ.append(R(LX, LY, LZ) - lift(rb.tc.curvature(X, Y, Z)))
    r_r.append(rb.curvature_endomorphism(r, v))
    return [
        Check("Sasakian: R(r, .) = 0", "curvature of the covariant derivative D expresses by", field_residual(r_r, points), tol),
        Check("Sasakian: R(X~,Y~)Z~ = (R^D(X,Y)Z)~", "curvature of the covariant derivative D expresses by", field_residual(r_XYZ, points), tol),
        Check("Sasakian: R(X~,Y~) r~ = 0", "curvature of the covariant derivative D expresses by", field_residual(r_XYrt, points), tol),
        Check("Sasakian: R(X~,v)Y~ = eps g(X,Y) r", "curvature of the covariant derivative D expresses by", field_residual(r_XvY, points), tol),
        Check("Sasakian: R(X~,v) r~ = -2 eps X~", "curvature of the covariant derivative D expresses by", field_residual(r_Xvrt, points), tol),
    ]


def verify_curvature_table(rb: RecurrentBundle, points, tol: float = 1e-7, sasakian: bool = False) -> list[Check]:
    out = curvature_checks(rb, points, tol)
    if sasakian:
        out += sasakian_curvature_checks(rb, points, tol)
    return out


def sasakian_axiom_checks(g: MetricField, xi: VectorField, phi: EndomorphismField, base_points,
                          tol: float = 1e-8) -> list[Check]:
    """K-contact and Sasakian axioms for (phi, xi, eta = g(xi, .), g).

    The contact condition is checked as g(phi X, Y) = -(1/2) d eta(X, Y) with
    the unnormalised exterior derivative used throughout.
    """
    n = g.dim
    eta = metric_dual(g, xi)
    deta = exterior_derivative(eta)
    gamma = christoffel(g)
    ident = constant_field(np.eye(n), n, 1, 1)
    phi2 = compose(phi, phi) - (contract("i,j->ij", xi, eta, up=1, down=1) - ident)
    g_phi = contract("ab,ai,bj->ij", g, phi, phi, up=0, down=2) + contract("i,j->ij", eta, eta, up=0, down=2)
    g_diff = g_phi - contract("ij->ij", g, up=0, down=2)
    contact = contract("ka,ai->ik", g, phi, up=0, down=2) + deta * 0.5
    # (nabla_X phi)(Y) = g(X, Y) xi - eta(Y) X, as a (1,2) tensor [m, j, i]
    nphi = nabla(gamma, phi)  # [m, j, i] = (nabla_i phi)^m_j
    sas = make_field(1, 2, n, lambda pts, order: (
        nphi.taylor(pts, order)
        - jets.einsum("bij,bm->bmji", g.taylor(pts, order), xi.taylor(pts, order))
        + jets.einsum("bj,mi->bmji", eta.taylor(pts, order), np.eye(n))
    ))
    tc = TransverseConnection(g, xi, 1)
    frame = [tc.project(X) for X in test_frame(n)]
    par = [tc.endomorphism_derivative(X, phi, Y) for X in test_frame(n) for Y in frame]
    return [
        Check("eta(xi) = 1", "(B, φ, ξ, η, g) is a K-contact manifold", max_abs(pair(eta, xi)(base_points) - 1.0), tol),
        Check("d eta(xi, .) = 0", "(B, φ, ξ, η, g) is a K-contact manifold", field_residual([interior(xi, deta)], base_points), tol),
        Check("phi^2 = -I + eta (x) xi", "(B, φ, ξ, η, g) is a K-contact manifold", field_residual([phi2], base_points), tol),
        Check("g(X,Y) = g(phi X, phi Y) + eta(X) eta(Y)", "(B, φ, ξ, η, g) is a K-contact manifold", field_residual([g_diff], base_points), tol),
        Check("g(phi X, Y) = -(1/2) d eta(X, Y)", "(B, φ, ξ, η, g) is a K-contact manifold", field_residual([contact], base_points), tol),
        Check("xi is Killing", "(B, φ, ξ, η, g) is a K-contact manifold", killing_residual(g, xi, base_points), tol),
        Check("(nabla_X phi)(Y) = g(X,Y) xi - eta(Y) X", "(B, φ, ξ, η, g) is a K-contact manifold", field_residual([sas], base_points), tol),
        Check("nabla^D phi = 0", "(B, φ, ξ, η, g) is a K-contact manifold", field_residual(par, base_points), tol),
    ]


def horizontal_annihilator_checks(rb: RecurrentBundle, points, tol: float = 1e-9) -> list[Check]:
    """g~(r, r) = 0, g~(r, r~) = 2 sigma and r-perp equal to the kernel of dtheta + a0."""
    G = rb.metric
    rflat = metric_dual(G, rb.r)
    A0 = rb.flat_chart.connection_form()
    diff = rflat + A0 * float(rb.sigma * rb.epsilon)
    lifts = [rb.iota(X) for X in test_frame(rb.g.dim)]
    return [
        Check("g~(r, r) = 0", "light-like vector field", max_abs(inner(G, rb.r, rb.r)(points)), 1e-10),
        Check("g~(r, r~) = 2 sigma", "r the parallel vector field ξ̄ + εv", max_abs(inner(G, rb.r, rb.r_tilde)(points) - 2 * rb.sigma), tol),
        Check("r-perp is the A0-horizontal distribution", "admits a flat connection A₀",
              field_residual([diff] + [pair(rflat, L) for L in lifts], points), tol),
        Check("iota(xi) = r", "r the parallel vector field ξ̄ + εv", field_residual([rb.iota(rb.xi) - rb.r], points), tol),
    ]


# screen bundle -------------------------------------------------------------------


class NotInScreenError(ValueError):
    def __init__(self, violation: float):
        super().__init__(f"vector field is not a section of r-perp: max |g~(Y, r)| = {violation:.3e}")
        self.violation = violation


class ScreenBundle:
    """Quotient r-perp / <r>.  Classes are represented by their component
    orthogonal to r~, i.e. q(W) = W - g~(W, r~)/(2 sigma) r."""

    def __init__(self, rb: RecurrentBundle, check_tol: float = 1e-10):
        self.rb = rb
        self.check_tol = check_tol
        self.r_flat = metric_dual(rb.metric, rb.r)
        self.rt_flat = metric_dual(rb.metric, rb.r_tilde)

    def q(self, W: VectorField) -> VectorField:
        rb, rt = self.rb, self.rt_flat
        s = 2.0 * rb.sigma

        def taylor(pts, order):
            w = W.taylor(pts, order)
            c = jets.einsum("bi,bi->b", w, rt.taylor(pts, order)) * (1.0 / s)
            return w - c[:, None] * rb.r.taylor(pts, order)

        return make_field(1, 0, W.dim, taylor, name=f"q({W.name})")

    def checked(self, Y: VectorField) -> VectorField:
        rf, tol = self.r_flat, self.check_tol

        def taylor(pts, order):
            y = Y.taylor(pts, order)
            viol = float(np.max(np.abs(np.einsum("bi,bi->b", y.value, rf.taylor(pts, 0).value))))
            if viol > tol:
                raise NotInScreenError(viol)
            return y

        return make_field(1, 0, Y.dim, taylor, name=Y.name)

    def derivative(self, X: VectorField, Y: VectorField, leaf: bool = False) -> VectorField:
        """D^S_X (qY) = q(D_X Y) for Y a section of r-perp."""
        if leaf:
            X = self.checked(X)
        return self.q(self.rb.D(X, self.checked(Y)))


def screen_derivative(sb: ScreenBundle, X: VectorField, Y: VectorField, leaf: bool = False) -> VectorField:
    return sb.derivative(X, Y, leaf=leaf)


def screen_checks(rb: RecurrentBundle, points, tol: float = 1e-9, lam: ScalarField | None = None) -> list[Check]:
    sb = ScreenBundle(rb)
    n = rb.dim
    if lam is None:
        lam = ScalarField(lambda x: 1.0 + 0.5 * jets.sin(x[0]) * x[-1] + 0.2 * x[1] ** 2, dim=n)
    base = test_frame(rb.g.dim)
    dframe = rb.transverse_frame()
    leaf_dirs = [rb.iota(X) for X in base]
    well, comp = [], []
    for X, LX in zip(base, leaf_dirs):
        for Y in dframe:
            IY = rb.iota(Y)
            well.append(sb.derivative(LX, IY + rb.r * lam, leaf=True) - sb.derivative(LX, IY, leaf=True))
            comp.append(sb.derivative(LX, IY, leaf=True) - sb.q(rb.iota(rb.tc.derivative(X, Y))))
    return [
        Check("q(r) = 0", "D^𝒮_X(qY) := q(D_X Y)", field_residual([sb.q(rb.r)], points), 1e-10),
        Check("screen derivative is independent of the lift", "is called the screen bundle", field_residual(well, points), 1e-10),
        Check("D^S_{iota X} q(iota Y) = q(iota(nabla^D_X Y))", "D^𝒮_{ιX} q(ιY) = q(ι(∇^𝒟_X Y))",
              field_residual(comp, points), tol),
    ]
