"""Library of fully specified test geometries.

A :class:`Scenario` is a base metric with at most two circle-bundle stages
on top of it:

* an optional plain Kaluza-Klein stage (potential ``a``, sign ``sigma``);
* an optional recurrent stage, built either over the base with a given unit
  Killing field, or over the first stage with its fundamental field and the
  opposite sign (sigma' = -sigma).

Assembly is deterministic and cached per scenario instance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jets
from .checks import Check, field_residual, max_abs
from .circle_bundle import KKMetric, integrality_check
from .expressions import compile_components
from .fields import (
    EndomorphismField,
    MetricField,
    OneForm,
    VectorField,
    constant_field,
    exterior_derivative,
    halton_points,
    make_field,
)
from .recurrent import RecurrentBundle, build_recurrent_bundle, zero_form


class UnimplementedScenario(NotImplementedError):
    pass


class ScenarioError(ValueError):
    pass


# base geometries -------------------------------------------------------------------


def flat_metric(dim: int, signature=None) -> MetricField:
    diag = np.ones(dim) if signature is None else np.array([-1.0] * signature[0] + [1.0] * signature[1])
    sig = (int((diag < 0).sum()), int((diag > 0).sum()))
    return MetricField(dim=dim, signature=sig, taylor=lambda pts, order: jets.Jet.constant(np.diag(diag), dim, order),
                       name="flat")


def sphere_metric(radius: float = 1.0) -> MetricField:
    """Round S^2 of the given radius in stereographic coordinates: 4 R^2/(1+|x|^2)^2 delta."""
    c = 4.0 * radius**2

    def fn(x):
        f = c / (1 + x[0] ** 2 + x[1] ** 2) ** 2
        return [[f, 0.0], [0.0, f]]

    return MetricField(fn, dim=2, signature=(0, 2), name=f"S2(R={radius:g})")


def monopole_potential(charge: float = 1.0) -> OneForm:
    """q (x dy - y dx)/(1 + |x|^2); with z_S = 1/z_N the same formula serves both charts."""

    def fn(x):
        d = 1 + x[0] ** 2 + x[1] ** 2
        return [-charge * x[1] / d, charge * x[0] / d]

    return OneForm(fn, dim=2, name=f"monopole(q={charge:g})")


def rotation_field() -> VectorField:
    return VectorField(lambda x: [-x[1], x[0]], dim=2, name="rotation")


def constant_potential(coeffs) -> OneForm:
    c = np.asarray(coeffs, dtype=float)
    return constant_field(c, len(c), 0, 1, name="a0")


def sasakian_phi(kk: KKMetric) -> EndomorphismField:
    """-nabla(v) on a Kaluza-Klein total space, written through the base phi:
    W -> -(phi pi_* W)~, built from components rather than from the connection."""
    n, phi, a = kk.g.dim, kk.phi, kk.a
    emb = lambda T, pts, order: T.taylor(pts[:, :n], order).embed(n + 1, tuple(range(n)))

    def taylor(pts, order):
        p = emb(phi, pts, order)
        av = emb(a, pts, order)
        zero = 0.0 * p[:, 0, 0]
        top = [jets.stack([*(-p[:, i, j] for j in range(n)), zero], axis=-1) for i in range(n)]
        ap = jets.einsum("bk,bkj->bj", av, p)
        last = jets.stack([*(ap[:, j] for j in range(n)), zero], axis=-1)
        return jets.stack(top + [last], axis=-2)

    return make_field(1, 1, n + 1, taylor, name="phi_S", cls=EndomorphismField)


# scenarios -------------------------------------------------------------------------


@dataclass(frozen=True)
class Expected:
    value: object
    source: str


@dataclass
class Stage:
    sigma: int
    potential: Callable[[], OneForm] | None = None
    epsilon: int | None = None


@dataclass
class Scenario:
    name: str
    description: str
    base_metric: MetricField
    base_box: list
    bundle: Stage | None = None
    recurrent: Stage | None = None
    killing: VectorField | None = None
    base_sigma: int | None = None
    sasakian: bool = False
    negative_control: bool = False
    atlas: dict = field(default_factory=dict)  # two-chart S^2 data: radius, charge
    expected: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    # structure ----------------------------------------------------------------
    @property
    def is_double(self) -> bool:
        return self.bundle is not None and self.recurrent is not None

    def kk(self) -> KKMetric | None:
        if self.bundle is None:
            return None
        if "kk" not in self._cache:
            pot = self.bundle.potential() if self.bundle.potential else zero_form(self.base_metric.dim)
            self._cache["kk"] = KKMetric(self.base_metric, pot, self.bundle.sigma, name="P1")
        return self._cache["kk"]

    def recurrent_base(self):
        """(g, xi, sigma) on which the recurrent stage is built."""
        kk = self.kk()
        if kk is not None:
            return kk.metric, kk.v, -kk.sigma
        return self.base_metric, self.killing, self.base_sigma

    def box(self, space: str) -> list:
        """Sampling box of 'base', 'bundle' (first stage) or 'total' (top space)."""
        theta = [[0.0, 2 * np.pi]]
        if space == "base":
            return [list(b) for b in self.base_box]
        if space == "bundle":
            if self.bundle is None:
                raise ScenarioError(f"scenario {self.name!r} has no bundle stage")
            return self.box("base") + theta
        if space == "total":
            n_stages = int(self.bundle is not None) + int(self.recurrent is not None)
            return self.box("base") + theta * n_stages
        raise ValueError(f"unknown space {space!r}")

    def recurrent_base_space(self) -> str:
        return "bundle" if self.bundle is not None else "base"

    def points(self, space: str, n: int) -> np.ndarray:
        return halton_points(self.box(space), n)

    def origin(self, space: str) -> np.ndarray:
        """Deterministic generic base point for holonomy computations."""
        b = np.asarray(self.box(space), dtype=float)
        return b[:, 0] + 0.45 * (b[:, 1] - b[:, 0])

    def epsilons(self) -> list[int]:
        if self.recurrent is None:
            return []
        e = self.recurrent.epsilon
        return [e, -e]

    def build_recurrent(self, epsilon: int | None = None, grid: int = 16) -> RecurrentBundle:
        if self.recurrent is None:
            raise ScenarioError(f"scenario {self.name!r} has no recurrent stage")
        epsilon = self.recurrent.epsilon if epsilon is None else epsilon
        key = ("rec", epsilon, grid)
        if key not in self._cache:
            g, xi, sigma = self.recurrent_base()
            if self.recurrent.sigma is not None and self.recurrent.sigma != sigma:
                raise ScenarioError(
                    f"sign table violation: recurrent stage declares sigma={self.recurrent.sigma} "
                    f"but the base field has g(xi, xi) = {sigma}"
                )
            a0 = self.recurrent.potential() if self.recurrent.potential else None
            self._cache[key] = build_recurrent_bundle(
                g, xi, sigma, epsilon, a0, self.points(self.recurrent_base_space(), grid),
                name="P2" if self.bundle is not None else "P",
            )
        return self._cache[key]

    def top_metric(self) -> MetricField:
        if self.recurrent is not None:
            return self.build_recurrent().metric
        if self.bundle is not None:
            return self.kk().metric
        return self.base_metric


def assemble_double_bundle(base: Scenario, epsilon2: int, a20=None, name: str | None = None) -> Scenario:
    """Stage-2 flat-twist bundle over the first stage of ``base`` with sigma' = -sigma."""
    if base.bundle is None:
        raise ScenarioError("the base scenario has no first bundle stage")
    return Scenario(
        name=name or f"{base.name}-double",
        description=f"{base.description}; second stage with eps2={epsilon2:+d}",
        base_metric=base.base_metric,
        base_box=base.base_box,
        bundle=base.bundle,
        recurrent=Stage(-base.bundle.sigma, a20, epsilon2),
        sasakian=base.sasakian,
        atlas=base.atlas,
    )


def _flat_torus() -> Scenario:
    sc = Scenario(
        name="flat-base",
        description="flat 2-torus with the trivial bundle (sigma=-1), giving a flat T^3",
        base_metric=flat_metric(2),
        base_box=[[0.0, 2 * np.pi], [0.0, 2 * np.pi]],
        bundle=Stage(-1, lambda: zero_form(2)),
    )
    out = assemble_double_bundle(sc, 1, name="flat-torus")
    out.description = "flat tower T^2 -> T^3 -> T^4 (trivial bundle, then the flat-twist stage; Lorentzian T^4)"
    out.expected = {
        "holonomy_dim": Expected(0, "flat metric: every curvature operator vanishes"),
        "screen_holonomy_dim": Expected(0, "flat base"),
        "transverse_holonomy_dim": Expected(0, "flat base"),
        "signature": Expected([1, 3], "sign table: (0,2) + (0,1) from sigma=-1 + (1,0) from sigma'=+1"),
    }
    return out


def _hopf() -> Scenario:
    return Scenario(
        name="hopf",
        description="S^2 of radius 1/2 with the charge-1 monopole; sigma=-1 gives the round unit S^3",
        base_metric=sphere_metric(0.5),
        base_box=[[-1.0, 1.0], [-1.0, 1.0]],
        bundle=Stage(-1, lambda: monopole_potential(1.0)),
        sasakian=True,
        atlas={"radius": 0.5, "charge": 1.0},
        expected={
            "holonomy_dim": Expected(3, "round unit S^3 has holonomy so(3)"),
            "constant_curvature": Expected(1.0, "round unit S^3"),
            "transverse_holonomy_dim": Expected(1, "holonomy of the round S^2 is u(1)"),
            "integral_charge": Expected(1, "monopole of charge 1"),
            "signature": Expected([0, 3], "sign table: (0,2) + (0,1) from sigma=-1"),
        },
    )


def _hopf_double(epsilon: int) -> Scenario:
    out = assemble_double_bundle(_hopf(), epsilon, name="hopf-double" + ("" if epsilon == 1 else "-neg"))
    out.description = (
        f"Hopf S^3 followed by the flat-twist stage with sigma'=+1 and eps2={epsilon:+d}; 4-dim Lorentzian"
    )
    out.expected = {
        "holonomy_dim": Expected(3, "u(1) screen block plus the 2-dimensional Hom(<r~>, iota D) block"),
        "screen_holonomy_dim": Expected(1, "holonomy of the round S^2 is u(1)"),
        "transverse_holonomy_dim": Expected(1, "transverse holonomy of S^3 is the pulled-back u(1)"),
        "signature": Expected([1, 3], "sign table: (0,2) + (0,1) from sigma=-1 + (1,0) from sigma'=+1"),
    }
    return out


def _torus_recurrent(epsilon: int) -> Scenario:
    return Scenario(
        name="torus-recurrent" + ("" if epsilon == 1 else "-neg"),
        description=f"flat 2-torus with xi = d/dx, sigma=1, eps={epsilon:+d} and flat a0 = 0.3 dy",
        base_metric=flat_metric(2),
        base_box=[[0.0, 2 * np.pi], [0.0, 2 * np.pi]],
        recurrent=Stage(1, lambda: constant_potential([0.0, 0.3]), epsilon),
        killing=constant_field([1.0, 0.0], 2, 1, 0, name="d/dx"),
        base_sigma=1,
        expected={
            "holonomy_dim": Expected(0, "constant-coefficient metric"),
            "transverse_holonomy_dim": Expected(0, "flat base"),
            "signature": Expected([1, 2], "sign table: (0,2) + (1,0) from sigma=+1"),
        },
    )


def _broken_killing() -> Scenario:
    return Scenario(
        name="broken-killing",
        description="unit but non-Killing field (cos y, sin y) on the flat plane; must be rejected",
        base_metric=flat_metric(2),
        base_box=[[-1.0, 1.0], [-1.0, 1.0]],
        recurrent=Stage(1, None, 1),
        killing=VectorField(lambda x: [jets.cos(x[1]), jets.sin(x[1])], dim=2, name="broken"),
        base_sigma=1,
        negative_control=True,
        expected={"rejected": Expected("xi is a Killing field", "L_xi g has the nonzero entry -sin(y) off the diagonal")},
    )


def _round_s2() -> Scenario:
    return Scenario(
        name="round-s2",
        description="unit round S^2 alone (no bundle), with the rotation Killing field",
        base_metric=sphere_metric(1.0),
        base_box=[[-1.0, 1.0], [-1.0, 1.0]],
        killing=rotation_field(),
        expected={
            "holonomy_dim": Expected(1, "constant curvature: so(2)"),
            "constant_curvature": Expected(1.0, "unit radius"),
            "signature": Expected([0, 2], "Riemannian"),
        },
    )


UNIMPLEMENTED = {
    "cpn": "complex projective spaces of complex dimension > 1",
    "hermitian-symmetric": "compact Hermitian symmetric spaces",
    "calabi-yau": "projective Calabi-Yau manifolds",
    "hyperkahler": "K3 surfaces and Hilbert schemes of points",
}

_BUILDERS = {
    "flat-torus": _flat_torus,
    "hopf": _hopf,
    "hopf-double": lambda: _hopf_double(1),
    "hopf-double-neg": lambda: _hopf_double(-1),
    "torus-recurrent": lambda: _torus_recurrent(1),
    "torus-recurrent-neg": lambda: _torus_recurrent(-1),
    "broken-killing": _broken_killing,
    "round-s2": _round_s2,
}


def scenario_names() -> list[str]:
    return list(_BUILDERS)


def get_scenario(name: str) -> Scenario:
    if name in UNIMPLEMENTED:
        raise UnimplementedScenario(f"scenario {name!r} ({UNIMPLEMENTED[name]}) is not implemented")
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ScenarioError(f"unknown scenario {name!r}; available: {', '.join(_BUILDERS)}") from None


def catalog() -> list[Scenario]:
    return [b() for b in _BUILDERS.values()]


# S^2 atlas ----------------------------------------------------------------------------


def _transition_jacobian(x):
    """Jacobian of z -> 1/z at points x (B, 2)."""
    X, Y = x[:, 0], x[:, 1]
    r2 = X**2 + Y**2
    # 1/z = (x - i y)/r^2
    du_dx = (Y**2 - X**2) / r2**2
    du_dy = -2 * X * Y / r2**2
    dv_dx = 2 * X * Y / r2**2
    dv_dy = (Y**2 - X**2) / r2**2
    J = np.empty((len(x), 2, 2))
    J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1] = du_dx, du_dy, dv_dx, dv_dy
    return J


def s2_transition_check(radius: float = 1.0, charge: float = 1.0, n: int = 64, tol: float = 1e-9) -> list[Check]:
    """Validate the two-chart stereographic atlas on the overlap annulus 1/2 <= |x| <= 2.

    The south chart is y = 1/z (complex inversion); the metric must pull back
    to itself, and the monopole potentials must differ by the closed gauge
    term charge * dphi.
    """
    g = sphere_metric(radius)
    a = monopole_potential(charge)
    u = halton_points([[0.5, 2.0], [0.0, 2 * np.pi]], n)
    xN = np.column_stack([u[:, 0] * np.cos(u[:, 1]), u[:, 0] * np.sin(u[:, 1])])
    r2 = np.sum(xN**2, axis=1)
    xS = np.column_stack([xN[:, 0] / r2, -xN[:, 1] / r2])
    J = _transition_jacobian(xN)
    gN, gS = g(xN), g(xS)
    metric_res = max_abs(np.einsum("bki,bkl,blj->bij", J, gS, J) - gN)
    aN, aS = a(xN), a(xS)
    pulled = np.einsum("bk,bki->bi", aS, J)
    dphi = np.column_stack([-xN[:, 1] / r2, xN[:, 0] / r2])
    gauge_res = max_abs(aN - pulled - charge * dphi)
    diff = OneForm(lambda x: [(-x[1]) / (x[0] ** 2 + x[1] ** 2), x[0] / (x[0] ** 2 + x[1] ** 2)], dim=2)
    closed = field_residual([exterior_derivative(diff)], xN)
    res = integrality_check(a, a)
    return [
        Check("metric transforms under z -> 1/z", "two-chart atlas", metric_res, tol),
        Check("a_N - a_S = q dphi on the overlap", "two-chart atlas", gauge_res, tol),
        Check("gauge difference is closed", "two-chart atlas", closed, tol),
        Check("(1/2 pi) integral of da is an integer", "is an integral second De Rham cohomology class",
              res.deviation, 1e-4),
    ]


# config-defined scenarios ------------------------------------------------------------------

_SCENARIO_KEYS = {"name", "description", "base", "bundle", "recurrent", "killing", "sigma", "sasakian",
                  "negative_control", "expected"}
_BASE_KEYS = {"coordinates", "metric", "signature", "box"}
_STAGE_KEYS = {"sigma", "potential", "epsilon"}


def _reject_unknown(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    extra = set(obj) - allowed
    if extra:
        raise ScenarioError(f"{where}: unknown keys {sorted(extra)}")


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a scenario from a configuration mapping of component expressions.

    Stage potentials live on the space the stage is built over: the base for
    the first stage, the base (or the first stage, with coordinate ``theta``
    appended) for the recurrent stage.
    """
    _reject_unknown(doc, _SCENARIO_KEYS, "scenario")
    base = doc.get("base")
    _reject_unknown(base, _BASE_KEYS, "scenario.base")
    coords = list(base.get("coordinates", []))
    n = len(coords)
    if n == 0 or "metric" not in base or "box" not in base:
        raise ScenarioError("scenario.base needs coordinates, metric and box")
    metric = MetricField(compile_components(base["metric"], coords), dim=n,
                         signature=base.get("signature", (0, n)), name=doc.get("name", "inline"))
    box = [list(map(float, b)) for b in base["box"]]
    if len(box) != n:
        raise ScenarioError("scenario.base.box must have one interval per coordinate")

    def stage(key, dim_coords):
        st = doc.get(key)
        if st is None:
            return None
        _reject_unknown(st, _STAGE_KEYS, f"scenario.{key}")
        pot = st.get("potential")
        factory = None
        if pot is not None:
            fn = compile_components(pot, dim_coords)
            factory = lambda: OneForm(fn, dim=len(dim_coords), name=f"{key}-potential")
        return Stage(int(st["sigma"]) if "sigma" in st else None, factory,
                     int(st["epsilon"]) if "epsilon" in st else None)

    bundle = stage("bundle", coords)
    if bundle is not None and bundle.sigma is None:
        raise ScenarioError("scenario.bundle needs sigma")
    recurrent = stage("recurrent", coords + (["theta"] if bundle is not None else []))
    if recurrent is not None and recurrent.epsilon not in (1, -1):
        raise ScenarioError("scenario.recurrent needs epsilon = +1 or -1")
    killing = None
    if "killing" in doc:
        killing = VectorField(compile_components(doc["killing"], coords), dim=n, name="xi")
    if recurrent is not None and bundle is None and killing is None:
        raise ScenarioError("a recurrent stage over the base needs a killing field")
    expected = {}
    for k, v in (doc.get("expected") or {}).items():
        if isinstance(v, dict):
            expected[k] = Expected(v.get("value"), str(v.get("source", "config")))
        else:
            expected[k] = Expected(v, "config")
    return Scenario(
        name=str(doc.get("name", "inline")),
        description=str(doc.get("description", "")),
        base_metric=metric,
        base_box=box,
        bundle=bundle,
        recurrent=recurrent,
        killing=killing,
        base_sigma=int(doc["sigma"]) if "sigma" in doc else None,
        sasakian=bool(doc.get("sasakian", False)),
        negative_control=bool(doc.get("negative_control", False)),
        expected=expected,
    )
