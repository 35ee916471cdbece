"""Local model of a principal circle bundle with a connection and its
Kaluza-Klein metric.

Conventions (all numerics are real):

* a bundle chart has coordinates ``(x^1..x^n, theta)`` with theta last;
* the connection form is ``A = i (dtheta + a)`` for a real potential ``a``,
  so the fundamental field is ``v = d/dtheta`` and ``A(v) = i``;
* the curvature satisfies ``i Omega = -da``, i.e. ``Omega = i da``;
* the metric ``pi*g + sigma A (x) A`` becomes ``pi*g - sigma (dtheta + a)^2``,
  hence ``g~(v, v) = -sigma``;
* ``phi`` is defined by ``g(phi X, Y) = -(sigma/2) da(X, Y)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .checks import Check, field_residual, max_abs
from .fields import (
    EndomorphismField,
    MetricField,
    OneForm,
    ScalarField,
    TensorField,
    TwoForm,
    VectorField,
    apply,
    contract,
    coordinate_field,
    evaluate_form,
    exterior_derivative,
    lie_bracket,
    lie_derivative,
    make_field,
    pair,
)
from .levi_civita import (
    TransverseConnection,
    christoffel,
    covariant_derivative,
    inverse_metric,
    nabla,
)


class QuadratureError(RuntimeError):
    pass


def _embedded(field: TensorField, total_dim: int):
    """Jet of a base field evaluated at the projections of bundle points."""
    n = field.dim
    var_map = tuple(range(n))

    def taylor(pts, order):
        return field.taylor(pts[:, :n], order).embed(total_dim, var_map)

    return taylor


def _pad(jet, axes, total_dim):
    """Zero-pad the given tensor axes (after the batch axis) from n to total_dim."""
    width = [(0, 0)] * jet.coeffs.ndim
    for ax in axes:
        width[1 + ax] = (0, total_dim - jet.shape[1 + ax])
    return jets.Jet(np.pad(jet.coeffs, width), jet.nvars, jet.order)


class BundleChart:
    """Base chart times the fibre angle, with a real connection potential."""

    def __init__(self, potential: OneForm, name: str = "P"):
        self.potential = potential
        self.base_dim = potential.dim
        self.dim = self.base_dim + 1
        self.name = name
        self.fundamental = coordinate_field(self.dim, self.base_dim)

    def project(self, points) -> np.ndarray:
        return np.atleast_2d(points)[:, : self.base_dim]

    def pullback(self, T: TensorField) -> TensorField:
        """pi* of a covariant tensor (or scalar) field on the base."""
        if T.up != 0:
            raise ValueError("only covariant fields can be pulled back")
        emb = _embedded(T, self.dim)
        total = self.dim

        def taylor(pts, order):
            return _pad(emb(pts, order), range(T.down), total)

        cls = {0: ScalarField, 1: OneForm}.get(T.down, TensorField)
        if isinstance(T, TwoForm):
            cls = TwoForm
        return make_field(0, T.down, self.dim, taylor, name=f"pi*{T.name}", cls=cls)

    def lift(self, X: VectorField) -> VectorField:
        """Horizontal lift X - a(X) d/dtheta."""
        emb_x = _embedded(X, self.dim)
        emb_a = _embedded(self.potential, self.dim)

        def taylor(pts, order):
            x = emb_x(pts, order)
            ax = jets.einsum("bi,bi->b", emb_a(pts, order), x)
            return jets.stack([*(x[:, i] for i in range(self.base_dim)), -ax], axis=-1)

        return make_field(1, 0, self.dim, taylor, name=f"lift({X.name})")

    def connection_value(self, W: VectorField) -> ScalarField:
        """A(W)/i = W^theta + a(pi_* W)."""
        form = self.connection_form()
        return pair(form, W)

    def connection_form(self) -> OneForm:
        """dtheta + pi*a on the bundle chart."""
        pa = self.pullback(self.potential)
        e = np.zeros(self.dim)
        e[-1] = 1.0
        return make_field(0, 1, self.dim, lambda pts, order: pa.taylor(pts, order) + e, name="dtheta+a")


def horizontal_lift(chart: BundleChart, X: VectorField) -> VectorField:
    return chart.lift(X)


def curvature_form(a: OneForm) -> TwoForm:
    """Real curvature 2-form da (the connection curvature is Omega = i da)."""
    return exterior_derivative(a)


def phi_from_potential(g: MetricField, a: OneForm, sigma: int) -> EndomorphismField:
    """phi with g(phi X, Y) = -(sigma/2) da(X, Y)."""
    da = curvature_form(a)
    ginv = inverse_metric(g)
    return contract("mk,jk->mj", ginv, da, up=1, down=1, cls=EndomorphismField) * (-0.5 * sigma)


class KKMetric:
    """Kaluza-Klein metric pi*g - sigma (dtheta + a)^2 on a bundle chart."""

    def __init__(self, g: MetricField, a: OneForm, sigma: int, name: str = "P"):
        if sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        if g.dim != a.dim:
            raise ValueError("metric and potential live on charts of different dimension")
        self.g = g
        self.a = a
        self.sigma = int(sigma)
        self.chart = BundleChart(a, name=name)
        self.dim = self.chart.dim
        neg, pos = g.signature
        signature = (neg + 1, pos) if sigma == 1 else (neg, pos + 1)
        emb_g = _embedded(g, self.dim)
        emb_a = _embedded(a, self.dim)
        n, s = g.dim, float(sigma)

        def taylor(pts, order):
            gb = emb_g(pts, order)
            ab = emb_a(pts, order)
            top = gb - s * jets.einsum("bi,bj->bij", ab, ab)
            rows = [jets.stack([*(top[:, i, j] for j in range(n)), -s * ab[:, i]], axis=-1) for i in range(n)]
            last = jets.stack([*(-s * ab[:, j] for j in range(n)), -s + 0.0 * ab[:, 0]], axis=-1)
            return jets.stack(rows + [last], axis=-2)

        self.metric = MetricField(dim=self.dim, signature=signature, taylor=taylor, name=f"g~[{name}]")
        self.gamma = christoffel(self.metric)
        self.base_gamma = christoffel(g)
        self.curvature = curvature_form(a)
        self.phi = phi_from_potential(g, a, sigma)

    @property
    def v(self) -> VectorField:
        return self.chart.fundamental

    def lift(self, X: VectorField) -> VectorField:
        return self.chart.lift(X)

    def D(self, X: VectorField, Y: VectorField) -> VectorField:
        return covariant_derivative(self.gamma, X, Y)

    def base_nabla(self, X: VectorField, Y: VectorField) -> VectorField:
        return covariant_derivative(self.base_gamma, X, Y)

    def fibre_transverse(self) -> TransverseConnection:
        """Transverse connection on v-perp (the horizontal bundle) over P."""
        return TransverseConnection(self.metric, self.v, -self.sigma)

    def grid(self, base_points, thetas) -> np.ndarray:
        base_points = np.atleast_2d(base_points)
        thetas = np.broadcast_to(np.asarray(thetas, dtype=float), (len(base_points),))
        return np.column_stack([base_points, thetas])


def kk_metric(g: MetricField, a: OneForm, sigma: int, name: str = "P") -> KKMetric:
    return KKMetric(g, a, sigma, name=name)


def test_frame(dim: int) -> list[VectorField]:
    """Coordinate fields plus two non-coordinate fields with non-trivial brackets."""
    frame = [coordinate_field(dim, i) for i in range(dim)]
    last = dim - 1

    def w1(x):
        comps = [0.0] * dim
        comps[0] = 1.0 + 0.5 * x[last] ** 2
        comps[last] = 0.3 * jets.sin(x[0])
        return comps

    def w2(x):
        comps = [0.0] * dim
        comps[0] = 0.2 * x[0] * x[last]
        comps[last] = 1.0 - 0.25 * x[0] ** 2
        if dim > 2:
            comps[1] = 0.4 * jets.cos(x[last])
        return comps

    frame.append(VectorField(w1, dim=dim, name="W1"))
    frame.append(VectorField(w2, dim=dim, name="W2"))
    return frame


def bracket_checks(kk: KKMetric, points, frame=None, tol: float = 1e-9) -> list[Check]:
    """Horizontal-lift bracket relations, the curvature definition and A(X~) = 0."""
    frame = frame or test_frame(kk.g.dim)
    chart, v, da = kk.chart, kk.v, kk.curvature
    A = chart.connection_form()
    lifts = [chart.lift(X) for X in frame]
    r_xv = field_residual([lie_bracket(L, v) for L in lifts], points)
    r_hor = field_residual([pair(A, L) for L in lifts], points)
    r_xy, r_om = [], []
    for i, X in enumerate(frame):
        for j, Y in enumerate(frame):
            if j <= i:
                continue
            br = lie_bracket(lifts[i], lifts[j])
            daXY = chart.pullback(evaluate_form(da, X, Y))
            r_xy.append(br - chart.lift(lie_bracket(X, Y)) + v * daXY)
            # Omega(X, Y) = -A([X~, Y~]) with Omega = i da:  -(A/i)([X~,Y~]) - da(X,Y) = 0
            r_om.append(-pair(A, br) - daXY)
    closed = exterior_derivative(da)
    base_pts = chart.project(points)
    return [
        Check("horizontal lift has A(X~) = 0", "call horizontal lift of X", r_hor, tol),
        Check("[X~, v] = 0", "[X̄, v] = 0", r_xv, tol),
        Check("[X~, Y~] = [X,Y]~ + i Omega(X,Y) v", "Ω(X,Y) := −A([X̄,Ȳ])", field_residual(r_xy, points), tol),
        Check("Omega(X,Y) = -A([X~, Y~])", "Ω(X,Y) := −A([X̄,Ȳ])", field_residual(r_om, points), tol),
        Check("curvature form is closed", "real representation iΩ = −da", field_residual([closed], base_pts), tol),
    ]


def kk_derivative_checks(kk: KKMetric, points, frame=None, tol: float = 1e-8, lemma_tol: float = 1e-10) -> list[Check]:
    """Levi-Civita derivative table of the Kaluza-Klein metric, Killing property of v,
    and the transverse-connection relations on the horizontal bundle."""
    frame = frame or test_frame(kk.g.dim)
    v, D, chart = kk.v, kk.D, kk.chart
    lifts = [kk.lift(X) for X in frame]
    phiX = [kk.lift(apply(kk.phi, X)) for X in frame]
    r_vv = field_residual([D(v, v)], points)
    r_vx = field_residual([D(v, L) - P for L, P in zip(lifts, phiX)], points)
    r_xv = field_residual([D(L, v) - P for L, P in zip(lifts, phiX)], points)
    r_xy = []
    for X, LX in zip(frame, lifts):
        for Y, LY in zip(frame, lifts):
            half = chart.pullback(evaluate_form(kk.curvature, X, Y)) * 0.5
            r_xy.append(D(LX, LY) - kk.lift(kk.base_nabla(X, Y)) + v * half)
    vv = contract("ij,i,j->", kk.metric, v, v, up=0, down=0)(points)
    killing = lie_derivative(kk.metric, v)
    tc = kk.fibre_transverse()
    r_tv = field_residual([tc.derivative(v, L) for L in lifts], points)
    r_tx = []
    for X, LX in zip(frame, lifts):
        for Y, LY in zip(frame, lifts):
            r_tx.append(tc.derivative(LX, LY) - kk.lift(kk.base_nabla(X, Y)))
    return [
        Check("D_v v = 0", "D_v v = 0", r_vv, tol),
        Check("D_v X~ = (phi X)~", "D_v X̄ = D_{X̄} v = (φX)̄", r_vx, tol),
        Check("D_X~ v = (phi X)~", "D_v X̄ = D_{X̄} v = (φX)̄", r_xv, tol),
        Check("D_X~ Y~ = (nabla_X Y)~ + (i/2) Omega(X,Y) v", "D_{X̄} Ȳ = (∇_X Y)̄ + (i/2)Ω(X,Y) v", field_residual(r_xy, points), tol),
        Check("g~(v, v) = -sigma", "v is a Killing vector field s.t. g̃(v,v) = −σ", max_abs(vv + kk.sigma), lemma_tol),
        Check("v is Killing for g~", "v is a Killing vector field", field_residual([killing], points), lemma_tol),
        Check("D^D_v Y~ = 0", "∇^𝒟_ξ Y = p([ξ,Y])", r_tv, 1e-9),
        Check("D^D_X~ Y~ = (nabla_X Y)~", "∇^𝒟_X Y = p(∇_X Y)", field_residual(r_tx, points), 1e-9),
    ]


def verify_kk_derivative_table(kk: KKMetric, points, frame=None, tol: float = 1e-8) -> list[Check]:
    return kk_derivative_checks(kk, points, frame, tol=tol)


def phi_checks(kk: KKMetric, points, tol: float = 1e-8) -> list[Check]:
    """Skewness of phi and the link between the covariant derivatives of Omega and phi."""
    g, phi, gamma = kk.g, kk.phi, kk.base_gamma
    base_pts = kk.chart.project(points)
    gphi = contract("km,mj->jk", g, phi, up=0, down=2)  # g(phi e_j, e_k)
    skew = gphi + contract("jk->kj", gphi, up=0, down=2)
    F = kk.curvature * (-0.5 * kk.sigma)  # sigma (i/2) Omega in real form
    link = contract("jki->jki", nabla(gamma, F), up=0, down=3) - contract(
        "mk,mji->jki", g, nabla(gamma, phi), up=0, down=3
    )
    return [
        Check("phi is g-skew", "g(φX,Y) = σ (i/2) Ω(X,Y)", field_residual([skew], base_pts), 1e-10),
        Check(
            "sigma (i/2)(nabla Omega)(X,Y,Z) = g((nabla_X phi) Y, Z)",
            "g(φX,Y) = σ (i/2) Ω(X,Y)",
            field_residual([link], base_pts),
            tol,
        ),
    ]


# horizontal curves -------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


class HorizontalLift:
    """Horizontal lift of a batch of base polylines through fibre angles theta0.

    Along the lift theta' = -a(x') so that A(c') = 0.
    """

    def __init__(self, base_path, potential: OneForm, theta0=0.0):
        self.base = base_path
        self.potential = potential
        self.theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (base_path.batch,)).copy()
        starts = [self.theta0]
        for seg in range(base_path.n_segments):
            starts.append(starts[-1] + self._increment(seg, 1.0))
        self._starts = starts

    @property
    def n_segments(self):
        return self.base.n_segments

    @property
    def batch(self):
        return self.base.batch

    @property
    def dim(self):
        return self.base.dim + 1

    def _rate(self, seg, s):
        x = self.base.position(seg, s)
        a = self.potential(x)
        return -np.einsum("bi,bi->b", a, self.base.velocity(seg, s))

    def _increment(self, seg, s):
        if s == 0.0:
            return np.zeros(self.batch)
        nodes = 0.5 * s * (_GL_X + 1.0)
        a, b = self.base.vertices[:, seg], self.base.vertices[:, seg + 1]
        x = (a[None] + nodes[:, None, None] * (b - a)[None]).reshape(-1, a.shape[1])
        rates = -np.einsum("kbi,bi->kb", self.potential(x).reshape(len(nodes), len(a), -1), b - a)
        return 0.5 * s * (_GL_W @ rates)

    def samples(self, seg, ts):
        """Vectorised positions/velocities at increasing parameters ts (ts[0] = 0)."""
        ts = np.asarray(ts, dtype=float)
        a, b = self.base.vertices[:, seg], self.base.vertices[:, seg + 1]
        d = b - a
        lo, hi = ts[:-1], ts[1:]
        nodes = (0.5 * (hi - lo)[:, None] * (_GL8_X + 1.0)[None] + lo[:, None]).ravel()
        x = a[None] + nodes[:, None, None] * d[None]
        av = self.potential(x.reshape(-1, a.shape[1])).reshape(x.shape)
        rates = -np.einsum("kbi,bi->kb", av, d).reshape(len(lo), len(_GL8_W), len(a))
        incr = 0.5 * (hi - lo)[:, None] * np.einsum("q,kqb->kb", _GL8_W, rates)
        theta = self._starts[seg][None] + np.concatenate([np.zeros((1, len(a))), np.cumsum(incr, axis=0)])
        theta += self._increment(seg, ts[0])[None]
        base_pos = a[None] + ts[:, None, None] * d[None]
        pos = np.concatenate([base_pos, theta[..., None]], axis=-1)
        end_rates = -np.einsum("tbi,bi->tb", self.potential(base_pos.reshape(-1, a.shape[1])).reshape(base_pos.shape), d)
        vel = np.concatenate([np.broadcast_to(d, base_pos.shape), end_rates[..., None]], axis=-1)
        return pos, vel

    def position(self, seg, s):
        theta = self._starts[seg] + self._increment(seg, s)
        return np.column_stack([self.base.position(seg, s), theta])

    def velocity(self, seg, s):
        return np.column_stack([self.base.velocity(seg, s), self._rate(seg, s)])

    def end_theta(self):
        return self._starts[-1]


# integrality on the two-chart sphere ----------------------------------------------


def _smooth_step(t):
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def north_cutoff(r, r_in: float = 0.5, r_out: float = 2.0):
    """Partition-of-unity weight of the north chart as a function of |x_N|."""
    return _smooth_step((r_out - np.asarray(r)) / (r_out - r_in))


@dataclass(frozen=True)
class IntegralityResult:
    value: float
    nearest: int
    integral: bool
    error_estimate: float
    nodes: int

    @property
    def deviation(self) -> float:
        return abs(self.value - self.nearest)


def _chart_integral(a: OneForm, weight, n: int, r_max: float, breaks) -> float:
    F = curvature_form(a)
    edges = [0.0, *breaks, r_max]
    xg, wg = np.polynomial.legendre.leggauss(n)
    angles = 2 * np.pi * np.arange(n) / n
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        r = 0.5 * (hi - lo) * (xg + 1.0) + lo
        wr = 0.5 * (hi - lo) * wg
        R, T = np.meshgrid(r, angles, indexing="ij")
        pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
        f = F(pts)[:, 0, 1].reshape(R.shape) * weight(R) * R
        total += float(np.sum(wr[:, None] * f) * (2 * np.pi / n))
    return total


def integrality_check(a_north: OneForm, a_south: OneForm, *, nodes: int = 32, max_nodes: int = 512,
                      tol: float = 1e-10, integral_tol: float = 1e-4) -> IntegralityResult:
    """(1/2 pi) * integral of da over the sphere covered by two stereographic charts.

    The south chart is related to the north one by z_S = 1/z_N; the charts are
    weighted by a smooth partition of unity depending only on |z|.
    """
    r_in, r_out = 0.5, 2.0
    w_n = lambda R: north_cutoff(R, r_in, r_out)
    w_s = lambda R: 1.0 - north_cutoff(1.0 / np.maximum(R, 1e-300), r_in, r_out)
    prev, err, n = None, np.inf, nodes
    while n <= max_nodes:
        val = (
            _chart_integral(a_north, w_n, n, r_out, [r_in])
            + _chart_integral(a_south, w_s, n, r_out, [r_in])
        ) / (2 * np.pi)
        if prev is not None:
            err = abs(val - prev)
            if err < tol:
                nearest = int(round(val))
                return IntegralityResult(val, nearest, abs(val - nearest) < integral_tol, err, n)
        prev = val
        n *= 2
    raise QuadratureError(f"sphere quadrature did not converge (last change {err:.3e})")
