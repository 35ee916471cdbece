"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores the Taylor coefficients of a (tensor of) smooth
function(s) of ``nvars`` variables around a batch of base points, truncated
at total degree ``order``.  Arithmetic on jets propagates derivatives exactly
(forward-mode algorithmic differentiation with all mixed perturbations), so
``order`` derivatives of a composite expression are available to machine
precision.

Monomials are stored in graded order, so the coefficients of a jet of order
``k`` are a prefix of the coefficients of the same jet at any higher order.
The last axis of :attr:`Jet.coeffs` indexes monomials; all leading axes are
broadcast elementwise.
"""
from __future__ import annotations

import itertools
import math
import string
from functools import lru_cache

import numpy as np

MAX_ORDER = 8


class JetError(ValueError):
    pass


@lru_cache(maxsize=None)
def monomials(nvars: int, order: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), degree):
            exps = [0] * nvars
            for i in combo:
                exps[i] += 1
            out.append(tuple(exps))
    return tuple(out)


def n_coeffs(nvars: int, order: int) -> int:
    return math.comb(nvars + order, order)


@lru_cache(maxsize=None)
def _index(nvars: int, order: int) -> dict:
    return {m: i for i, m in enumerate(monomials(nvars, order))}


@lru_cache(maxsize=None)
def _mul_table(nvars: int, order: int):
    mons = monomials(nvars, order)
    idx = _index(nvars, order)
    triples = []
    for i, mi in enumerate(mons):
        di = sum(mi)
        for j, mj in enumerate(mons):
            if di + sum(mj) > order:
                continue
            k = idx[tuple(a + b for a, b in zip(mi, mj))]
            triples.append((k, i, j))
    triples.sort()
    k, i, j = (np.array(t) for t in zip(*triples))
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return i, j, starts


@lru_cache(maxsize=None)
def _deriv_table(nvars: int, order: int, var: int):
    """Source indices and factors mapping a jet of ``order`` to its partial."""
    idx = _index(nvars, order)
    src, fac = [], []
    for m in monomials(nvars, order - 1):
        up = list(m)
        up[var] += 1
        src.append(idx[tuple(up)])
        fac.append(float(up[var]))
    return np.array(src), np.array(fac)


@lru_cache(maxsize=None)
def _embed_table(nvars: int, new_nvars: int, var_map: tuple[int, ...], order: int):
    idx = _index(new_nvars, order)
    out = []
    for m in monomials(nvars, order):
        e = [0] * new_nvars
        for old, new in enumerate(var_map):
            e[new] += m[old]
        out.append(idx[tuple(e)])
    return np.array(out)


class Jet:
    """Batched, tensor-shaped truncated Taylor expansion."""

    __array_priority__ = 1000

    def __init__(self, coeffs, nvars: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if order < 0:
            raise JetError("jet order must be non-negative")
        if order > MAX_ORDER:
            raise JetError(f"jet order {order} exceeds supported maximum {MAX_ORDER}")
        if coeffs.shape[-1] != n_coeffs(nvars, order):
            raise JetError(
                f"coefficient axis has length {coeffs.shape[-1]}, "
                f"expected {n_coeffs(nvars, order)} for nvars={nvars}, order={order}"
            )
        self.coeffs = coeffs
        self.nvars = nvars
        self.order = order

    # construction ------------------------------------------------------------
    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (n_coeffs(nvars, order),))
        c[..., 0] = value
        return cls(c, nvars, order)

    @classmethod
    def variables(cls, points, order: int) -> list["Jet"]:
        """Coordinate jets ``x_i = p_i + dx_i`` for a batch of points ``(B, n)``."""
        points = np.asarray(points, dtype=float)
        nvars = points.shape[-1]
        out = []
        for i in range(nvars):
            c = np.zeros(points.shape[:-1] + (n_coeffs(nvars, order),))
            c[..., 0] = points[..., i]
            if order >= 1:
                c[..., 1 + i] = 1.0
            out.append(cls(c, nvars, order))
        return out

    # basic properties --------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetError(f"cannot raise jet order from {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., : n_coeffs(self.nvars, order)], self.nvars, order)

    def _wrap(self, c) -> "Jet":
        return Jet(c, self.nvars, self.order)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if Ellipsis not in idx:
            idx = idx + (Ellipsis,)
        return self._wrap(self.coeffs[idx + (slice(None),)])

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def swapaxes(self, a: int, b: int) -> "Jet":
        a, b = (x if x >= 0 else x - 1 for x in (a, b))
        return self._wrap(np.swapaxes(self.coeffs, a, b))

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self._wrap(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)))

    def sum(self, axis) -> "Jet":
        axis = axis if axis >= 0 else axis - 1
        return self._wrap(self.coeffs.sum(axis=axis))

    # derivatives -------------------------------------------------------------
    def deriv(self, var: int) -> "Jet":
        """Partial derivative in variable ``var``; the order drops by one."""
        if self.order == 0:
            raise JetError("derivative of an order-0 jet is not available")
        src, fac = _deriv_table(self.nvars, self.order, var)
        return Jet(self.coeffs[..., src] * fac, self.nvars, self.order - 1)

    def grad(self) -> "Jet":
        """Gradient appended as a new trailing tensor axis."""
        parts = [self.deriv(i).coeffs for i in range(self.nvars)]
        return Jet(np.stack(parts, axis=-2), self.nvars, self.order - 1)

    def partial(self, multi_index) -> np.ndarray:
        """Value of the partial derivative listed as variable indices, e.g. (0, 0, 1)."""
        exps = [0] * self.nvars
        for i in multi_index:
            exps[i] += 1
        deg = sum(exps)
        if deg > self.order:
            raise JetError(f"derivative of order {deg} requested from a jet of order {self.order}")
        k = _index(self.nvars, self.order)[tuple(exps)]
        return self.coeffs[..., k] * math.prod(math.factorial(e) for e in exps)

    def embed(self, new_nvars: int, var_map) -> "Jet":
        """Re-express as a jet in ``new_nvars`` variables; old variable i -> var_map[i]."""
        table = _embed_table(self.nvars, new_nvars, tuple(var_map), self.order)
        c = np.zeros(self.shape + (n_coeffs(new_nvars, self.order),))
        c[..., table] = self.coeffs
        return Jet(c, new_nvars, self.order)

    # arithmetic --------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise JetError(f"cannot combine jets in {self.nvars} and {other.nvars} variables")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, None

    def __add__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            return a._wrap(a.coeffs + b.coeffs)
        c = np.array(np.broadcast_to(a.coeffs, np.broadcast_shapes(a.coeffs.shape, np.shape(other) + (1,))))
        c[..., 0] += other
        return a._wrap(c)

    __radd__ = __add__

    def __neg__(self):
        return self._wrap(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is None:
            return a._wrap(a.coeffs * np.asarray(other, dtype=float)[..., None])
        return a._wrap(_series_mul(a.coeffs, b.coeffs, a.nvars, a.order))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self._wrap(self.coeffs / np.asarray(other, dtype=float)[..., None])

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        if float(p).is_integer() and p >= 0:
            return _int_power(self, int(p))
        return _compose(self, lambda x0, k: _binom_coeffs(x0, float(p), k))

    def __rpow__(self, base):
        return exp(self * np.log(base))


def _series_mul(a, b, nvars, order):
    i, j, starts = _mul_table(nvars, order)
    prod = a[..., i] * b[..., j]
    return np.add.reduceat(prod, starts, axis=-1)


def _int_power(x: Jet, p: int) -> Jet:
    result = Jet.constant(np.ones(x.shape), x.nvars, x.order)
    base = x
    while p:
        if p & 1:
            result = result * base
        p >>= 1
        if p:
            base = base * base
    return result


def _compose(x: Jet, coeff_fn) -> Jet:
    """Evaluate ``f(x)`` from the univariate Taylor coefficients of ``f`` at x0.

    ``coeff_fn(x0, k)`` returns a list of ``k + 1`` arrays (coefficients of
    ``t**0 .. t**k`` in ``f(x0 + t)``).
    """
    x0 = x.value
    t = x - x0
    coeffs = coeff_fn(x0, x.order)
    out = Jet.constant(coeffs[-1], x.nvars, x.order)
    for c in reversed(coeffs[:-1]):
        out = out * t + c
    return out


def _binom_coeffs(x0, p, k):
    out = []
    c = np.ones_like(x0)
    for j in range(k + 1):
        out.append(c * np.power(x0, p - j))
        c = c * (p - j) / (j + 1)
    return out


def _univariate_inverse(series):
    """Coefficients of 1/s(t) for a truncated univariate series with s0 != 0."""
    n = len(series)
    inv = [1.0 / series[0]]
    for m in range(1, n):
        acc = sum(series[j] * inv[m - j] for j in range(1, m + 1))
        inv.append(-acc * inv[0])
    return inv


def _exp_coeffs(x0, k):
    e = np.exp(x0)
    return [e / math.factorial(j) for j in range(k + 1)]


def _log_coeffs(x0, k):
    out = [np.log(x0)]
    for j in range(1, k + 1):
        out.append((-1.0) ** (j + 1) / (j * x0**j))
    return out


def _sin_coeffs(x0, k):
    cyc = [np.sin(x0), np.cos(x0), -np.sin(x0), -np.cos(x0)]
    return [cyc[j % 4] / math.factorial(j) for j in range(k + 1)]


def _cos_coeffs(x0, k):
    cyc = [np.cos(x0), -np.sin(x0), -np.cos(x0), np.sin(x0)]
    return [cyc[j % 4] / math.factorial(j) for j in range(k + 1)]


def _arctan_coeffs(x0, k):
    # d/dt arctan(x0 + t) = 1 / (1 + x0^2 + 2 x0 t + t^2)
    denom = [1.0 + x0**2, 2.0 * x0, np.ones_like(x0)] + [np.zeros_like(x0)] * k
    deriv = _univariate_inverse(denom[: max(k, 1)])
    return [np.arctan(x0)] + [deriv[j - 1] / j for j in range(1, k + 1)]


def reciprocal(x):
    if not isinstance(x, Jet):
        return 1.0 / np.asarray(x, dtype=float)
    if np.any(x.value == 0):
        raise ZeroDivisionError("reciprocal of a jet with zero value")
    return _compose(x, lambda x0, k: [(-1.0) ** j / x0 ** (j + 1) for j in range(k + 1)])


def _unary(np_fn, coeff_fn):
    def fn(x):
        if isinstance(x, Jet):
            return _compose(x, coeff_fn)
        return np_fn(x)

    fn.__name__ = np_fn.__name__
    return fn


exp = _unary(np.exp, _exp_coeffs)
log = _unary(np.log, _log_coeffs)
sin = _unary(np.sin, _sin_coeffs)
cos = _unary(np.cos, _cos_coeffs)
arctan = _unary(np.arctan, _arctan_coeffs)


def sqrt(x):
    if isinstance(x, Jet):
        return x**0.5
    return np.sqrt(x)


def tan(x):
    return sin(x) / cos(x)


def sinh(x):
    return (exp(x) - exp(-x)) / 2.0


def cosh(x):
    return (exp(x) + exp(-x)) / 2.0


def tanh(x):
    return sinh(x) / cosh(x)


# tensor helpers ----------------------------------------------------------------


def _common(items):
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        raise JetError("at least one jet operand is required")
    nvars = jets[0].nvars
    if any(j.nvars != nvars for j in jets):
        raise JetError("jets with different variable counts")
    return nvars, min(j.order for j in jets)


def as_jet(x, nvars: int, order: int) -> Jet:
    if isinstance(x, Jet):
        return x.truncate(order)
    return Jet.constant(x, nvars, order)


def stack(items, axis: int = 0) -> Jet:
    """Stack jets and/or constants, broadcasting leading shapes."""
    nvars, order = _common(items)
    jets = [as_jet(x, nvars, order) for x in items]
    shape = np.broadcast_shapes(*(j.shape for j in jets))
    m = n_coeffs(nvars, order)
    arrs = [np.broadcast_to(j.coeffs, shape + (m,)) for j in jets]
    axis = axis if axis >= 0 else axis - 1
    return Jet(np.stack(arrs, axis=axis), nvars, order)


def nested(obj, nvars: int, order: int, depth: int) -> Jet:
    """Convert a nested list (``depth`` levels) of jets/numbers into one jet.

    The nesting levels become trailing tensor axes after the batch shape.
    """
    if depth == 0:
        return as_jet(obj, nvars, order)
    if isinstance(obj, Jet):
        return obj.truncate(order)
    return stack([nested(o, nvars, order, depth - 1) for o in obj], axis=-1 - (depth - 1))


def _free_letter(used: str) -> str:
    for ch in string.ascii_letters:
        if ch not in used:
            return ch
    raise JetError("einsum subscripts exhausted")


def _pair_einsum(sub_a: str, sub_b: str, sub_out: str, a, b):
    used = sub_a + sub_b + sub_out
    p = _free_letter(used)
    if isinstance(a, Jet) and isinstance(b, Jet):
        a, b = a._coerce(b)
        i, j, starts = _mul_table(a.nvars, a.order)
        prod = np.einsum(f"{sub_a}{p},{sub_b}{p}->{sub_out}{p}", a.coeffs[..., i], b.coeffs[..., j])
        return Jet(np.add.reduceat(prod, starts, axis=-1), a.nvars, a.order)
    if isinstance(a, Jet):
        c = np.einsum(f"{sub_a}{p},{sub_b}->{sub_out}{p}", a.coeffs, np.asarray(b, dtype=float))
        return Jet(c, a.nvars, a.order)
    if isinstance(b, Jet):
        c = np.einsum(f"{sub_a},{sub_b}{p}->{sub_out}{p}", np.asarray(a, dtype=float), b.coeffs)
        return Jet(c, b.nvars, b.order)
    return np.einsum(f"{sub_a},{sub_b}->{sub_out}", a, b)


def einsum(subscripts: str, *operands):
    """``numpy.einsum`` over jets (and constant arrays); explicit ``->`` required.

    Ellipsis is supported only as a leading ``...`` shared by every operand.
    """
    if "->" not in subscripts:
        raise JetError("einsum requires an explicit output specification")
    lhs, out = subscripts.replace(" ", "").split("->")
    subs = lhs.split(",")
    if len(subs) != len(operands):
        raise JetError("operand count does not match subscripts")
    strip = lambda s: s.replace("...", "")
    ell = "..." if "..." in subscripts else ""
    if len(operands) == 1:
        a = operands[0]
        if isinstance(a, Jet):
            p = _free_letter(lhs + out)
            return Jet(np.einsum(f"{subs[0]}{p}->{out}{p}", a.coeffs), a.nvars, a.order)
        return np.einsum(subscripts, a)
    cur, cur_sub = operands[0], strip(subs[0])
    for k in range(1, len(operands)):
        nxt = strip(subs[k])
        later = strip(out) + "".join(strip(s) for s in subs[k + 1 :])
        keep = "".join(dict.fromkeys(ch for ch in cur_sub + nxt if ch in later))
        target = strip(out) if k == len(operands) - 1 else keep
        cur = _pair_einsum(ell + cur_sub, ell + nxt, ell + target, cur, operands[k])
        cur_sub = target
    return cur


def matmul(a, b):
    return einsum("...ij,...jk->...ik", a, b)


def inv(a: Jet) -> Jet:
    """Inverse of a batch of square jet matrices (last two tensor axes)."""
    a0 = a.value
    cond = np.linalg.cond(a0)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
        raise np.linalg.LinAlgError("singular matrix in jet inverse")
    a0inv = np.linalg.inv(a0)
    x = -einsum("...ij,...jk->...ik", a0inv, a - a0)
    eye = np.broadcast_to(np.eye(a0.shape[-1]), a0.shape)
    s = Jet.constant(eye, a.nvars, a.order)
    for _ in range(a.order):
        s = einsum("...ij,...jk->...ik", x, s) + eye
    return einsum("...ij,...jk->...ik", s, a0inv)
