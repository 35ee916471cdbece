"""Chart-local tensor fields with exact derivatives.

Every field is a pure function of a batch of chart points.  Fields are
evaluated through :meth:`TensorField.taylor`, which returns a :class:`Jet`
holding the Taylor expansion of the components to a requested order.  Derived
fields (brackets, Lie derivatives, exterior derivatives, ...) request their
inputs at a higher order and differentiate the jets, so nothing here ever
falls back on finite differences.

Component layout: contravariant indices first, then covariant ones, after a
leading batch axis.  ``EndomorphismField`` components are ``phi[i, j] =
phi^i_j``; a ``TwoForm`` is stored as an antisymmetric ``(0, 2)`` array.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np
from scipy.stats import qmc

from . import jets
from .jets import Jet

SUPPORTED_ORDER = 3
_CACHE_SIZE = 24


class FieldEvaluationError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got array of shape {np.shape(points)}")
    bad = ~np.isfinite(pts)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FieldEvaluationError(f"non-finite coordinate {j} in point {pts[i].tolist()}")
    return pts


def halton_points(box, n: int) -> np.ndarray:
    """Deterministic low-discrepancy sample of ``n`` points in an axis-aligned box."""
    box = np.asarray(box, dtype=float)
    sampler = qmc.Halton(d=len(box), scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(n)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


class TensorField:
    """A (up, down) tensor field on an ``dim``-dimensional chart.

    Build one from plain component functions::

        g = MetricField(lambda x: [[1 + x[1]**2, 0], [0, 1]], dim=2)

    where ``x`` is the list of coordinates; component expressions may use the
    elementary functions in :mod:`kkholonomy.jets`.
    """

    up = 0
    down = 0

    def __init__(self, fn=None, dim=None, *, taylor=None, up=None, down=None, name=None):
        if dim is None:
            raise DimensionError("field dimension is required")
        if (fn is None) == (taylor is None):
            raise TypeError("give exactly one of fn or taylor")
        self.dim = int(dim)
        if up is not None:
            self.up = up
        if down is not None:
            self.down = down
        self.name = name or type(self).__name__
        self._fn = fn
        self._taylor = taylor if taylor is not None else self._taylor_from_fn
        self._cache: OrderedDict = OrderedDict()

    @property
    def rank(self) -> int:
        return self.up + self.down

    @property
    def component_shape(self) -> tuple[int, ...]:
        return (self.dim,) * self.rank

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dim={self.dim}, rank=({self.up},{self.down}))"

    def _taylor_from_fn(self, pts, order):
        xs = Jet.variables(pts, order)
        return jets.nested(self._fn(xs), self.dim, order, self.rank)

    def taylor(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        key = (pts.shape, pts.tobytes())
        hit = self._cache.get(key)
        if hit is not None and hit.order >= order:
            return hit.truncate(order)
        jet = self._taylor(pts, order)
        if not isinstance(jet, Jet):
            jet = Jet.constant(jet, self.dim, order)
        full = (len(pts),) + self.component_shape
        if jet.shape != full:
            try:
                c = np.broadcast_to(jet.coeffs, full + jet.coeffs.shape[-1:])
            except ValueError:
                raise FieldEvaluationError(
                    f"{self.name}: components have shape {jet.shape}, expected {full}"
                ) from None
            jet = Jet(np.array(c), jet.nvars, jet.order)
        if jet.order < order:
            raise FieldEvaluationError(f"{self.name}: produced order {jet.order} < requested {order}")
        jet = jet.truncate(order)
        bad = ~np.isfinite(jet.value.reshape(len(pts), -1)).all(axis=1)
        if bad.any():
            raise FieldEvaluationError(f"{self.name}: non-finite components at point {pts[bad][0].tolist()}")
        self._cache[key] = jet
        if len(self._cache) > _CACHE_SIZE:
            self._cache.popitem(last=False)
        return jet

    def __call__(self, points) -> np.ndarray:
        single = np.ndim(points) == 1
        vals = self.taylor(points, 0).value
        return vals[0] if single else vals

    # field algebra -----------------------------------------------------------
    def _same(self, other):
        if not isinstance(other, TensorField) or (other.up, other.down, other.dim) != (self.up, self.down, self.dim):
            raise DimensionError(f"incompatible fields {self!r} and {other!r}")

    def __add__(self, other):
        self._same(other)
        return derived(self.up, self.down, self.dim, lambda a, b: a + b, [self, other])

    def __sub__(self, other):
        self._same(other)
        return derived(self.up, self.down, self.dim, lambda a, b: a - b, [self, other])

    def __neg__(self):
        return derived(self.up, self.down, self.dim, lambda a: -a, [self])

    def __mul__(self, other):
        if isinstance(other, TensorField):
            if other.rank != 0 or other.dim != self.dim:
                raise DimensionError("fields can only be multiplied by scalar fields")
            pad = (None,) * self.rank
            return derived(
                self.up, self.down, self.dim,
                lambda a, f: a * Jet(f.coeffs[(slice(None),) + pad], f.nvars, f.order),
                [self, other],
            )
        c = float(other)
        return derived(self.up, self.down, self.dim, lambda a: a * c, [self])

    __rmul__ = __mul__


class ScalarField(TensorField):
    up, down = 0, 0


class VectorField(TensorField):
    up, down = 1, 0


class OneForm(TensorField):
    up, down = 0, 1


class TwoForm(TensorField):
    up, down = 0, 2


class EndomorphismField(TensorField):
    up, down = 1, 1


class MetricField(TensorField):
    """Symmetric nondegenerate (0, 2) field with a declared signature.

    ``signature`` is ``(negative, positive)`` eigenvalue counts.
    """

    up, down = 0, 2

    def __init__(self, fn=None, dim=None, *, signature, taylor=None, name=None):
        super().__init__(fn, dim, taylor=taylor, name=name)
        self.signature = tuple(int(s) for s in signature)
        if sum(self.signature) != self.dim:
            raise DimensionError(f"signature {self.signature} does not match dimension {self.dim}")


_KINDS = {
    (0, 0): ScalarField,
    (1, 0): VectorField,
    (0, 1): OneForm,
    (1, 1): EndomorphismField,
}


def make_field(up: int, down: int, dim: int, taylor, name=None, cls=None) -> TensorField:
    cls = cls or _KINDS.get((up, down), TensorField)
    if cls is TensorField:
        return TensorField(dim=dim, taylor=taylor, up=up, down=down, name=name)
    return cls(dim=dim, taylor=taylor, name=name)


def derived(up, down, dim, fn, deps, extra: int = 0, name=None, cls=None) -> TensorField:
    """Field whose jet is ``fn(*dep_jets)`` with deps requested at ``order + extra``."""

    def taylor(pts, order):
        return fn(*[d.taylor(pts, order + extra) for d in deps])

    return make_field(up, down, dim, taylor, name=name, cls=cls)


def contract(subscripts: str, *fields, up: int, down: int, name=None, cls=None) -> TensorField:
    """Pointwise tensor contraction of fields; subscripts omit the batch axis."""
    lhs, out = subscripts.split("->")
    batched = ",".join("..." + s for s in lhs.split(",")) + "->..." + out
    dim = fields[0].dim
    return derived(up, down, dim, lambda *js: jets.einsum(batched, *js), list(fields), name=name, cls=cls)


def constant_field(values, dim: int, up: int, down: int, name=None) -> TensorField:
    values = np.asarray(values, dtype=float)

    def taylor(pts, order):
        return Jet.constant(np.broadcast_to(values, (len(pts),) + values.shape), dim, order)

    return make_field(up, down, dim, taylor, name=name)


def coordinate_field(dim: int, i: int) -> VectorField:
    e = np.zeros(dim)
    e[i] = 1.0
    return constant_field(e, dim, 1, 0, name=f"d{i}")


def coordinate_frame(dim: int) -> list[VectorField]:
    return [coordinate_field(dim, i) for i in range(dim)]


# point evaluation ------------------------------------------------------------


def eval_field(field: TensorField, p) -> np.ndarray:
    """Component array of ``field`` at one point (or a batch)."""
    return field(p)


def partial(field: TensorField, p, multi_index) -> np.ndarray:
    """Exact partial derivative ``d^|I| field / dx_I`` at ``p``.

    ``multi_index`` lists coordinate indices, e.g. ``(0, 0, 1)`` for
    d^3/dx0^2 dx1.
    """
    multi_index = tuple(multi_index)
    if len(multi_index) > SUPPORTED_ORDER:
        raise jets.JetError(f"derivative order {len(multi_index)} exceeds supported order {SUPPORTED_ORDER}")
    if any(not 0 <= i < field.dim for i in multi_index):
        raise DimensionError(f"multi-index {multi_index} out of range for dimension {field.dim}")
    single = np.ndim(p) == 1
    out = field.taylor(p, len(multi_index)).partial(multi_index)
    return out[0] if single else out


# differential operators --------------------------------------------------------


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]^k = X^j d_j Y^k - Y^j d_j X^k."""
    if X.dim != Y.dim:
        raise DimensionError("vector fields live on charts of different dimension")

    def fn(x, y):
        return jets.einsum("bj,bkj->bk", x, y.grad()) - jets.einsum("bj,bkj->bk", y, x.grad())

    return derived(1, 0, X.dim, fn, [X, Y], extra=1, name=f"[{X.name},{Y.name}]")


_LETTERS = "cdefgh"


def lie_derivative(T: TensorField, X: VectorField) -> TensorField:
    """Lie derivative of a tensor field of total rank at most 2."""
    if T.rank > 2:
        raise ValueError(f"Lie derivative implemented for rank <= 2, got rank {T.rank}")
    if T.dim != X.dim:
        raise DimensionError("tensor and vector field live on charts of different dimension")
    idx = _LETTERS[: T.rank]

    def fn(t, x):
        dx = x.grad()
        out = jets.einsum(f"b{idx}k,bk->b{idx}", t.grad(), x)
        for pos, letter in enumerate(idx):
            swapped = idx.replace(letter, "k")
            if pos < T.up:
                out = out - jets.einsum(f"b{swapped},b{letter}k->b{idx}", t, dx)
            else:
                out = out + jets.einsum(f"b{swapped},bk{letter}->b{idx}", t, dx)
        return out

    return derived(T.up, T.down, T.dim, fn, [T, X], extra=1, name=f"L_{X.name}{T.name}", cls=type(T) if type(T) is not MetricField else TensorField)


def exterior_derivative(form: TensorField) -> TensorField:
    """d of a 0-, 1- or 2-form, with dw(X,Y) = X w(Y) - Y w(X) - w([X,Y])."""
    if form.up != 0 or form.down > 2:
        raise ValueError("exterior derivative is provided for 0-, 1- and 2-forms")
    if form.down == 0:
        return derived(0, 1, form.dim, lambda f: f.grad(), [form], extra=1, name=f"d{form.name}")
    if form.down == 1:

        def fn1(a):
            g = a.grad()  # g[j, i] = d_i a_j
            return g.swapaxes(1, 2) - g

        return derived(0, 2, form.dim, fn1, [form], extra=1, name=f"d{form.name}", cls=TwoForm)

    def fn2(b):
        g = b.grad()  # g[j, k, i] = d_i b_jk
        return (
            jets.einsum("bjki->bijk", g)
            + jets.einsum("bkij->bijk", g)
            + jets.einsum("bijk->bijk", g)
        )

    return derived(0, 3, form.dim, fn2, [form], extra=1, name=f"d{form.name}")


def interior(X: VectorField, form: TensorField) -> TensorField:
    """Insert X into the first slot of a form."""
    if form.down == 0:
        raise ValueError("cannot contract a vector into a 0-form")
    idx = _LETTERS[: form.down - 1]
    cls = {0: ScalarField, 1: OneForm}.get(form.down - 1, TensorField)
    return contract(f"k,k{idx}->{idx}", X, form, up=0, down=form.down - 1, cls=cls)


def cartan_lie_derivative(form: TensorField, X: VectorField) -> TensorField:
    """L_X w = d(i_X w) + i_X dw, for forms of degree 0..2."""
    if form.down == 0:
        return interior(X, exterior_derivative(form))
    return exterior_derivative(interior(X, form)) + interior(X, exterior_derivative(form))


def apply(E: EndomorphismField, X: VectorField) -> VectorField:
    return contract("ij,j->i", E, X, up=1, down=0)


def compose(A: EndomorphismField, B: EndomorphismField) -> EndomorphismField:
    return contract("ij,jk->ik", A, B, up=1, down=1)


def pair(alpha: OneForm, X: VectorField) -> ScalarField:
    return contract("i,i->", alpha, X, up=0, down=0)


def evaluate_form(beta: TensorField, X: VectorField, Y: VectorField) -> ScalarField:
    return contract("ij,i,j->", beta, X, Y, up=0, down=0)


def antisymmetry_residual(beta: TensorField, points) -> float:
    v = beta(np.atleast_2d(points))
    return float(np.max(np.abs(v + np.swapaxes(v, -1, -2)), initial=0.0))
