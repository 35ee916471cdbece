"""Levi-Civita connection, curvature, parallel transport and the transverse
connection on the orthogonal complement of a unit vector field."""
from __future__ import annotations

import numpy as np

from . import jets
from .fields import (
    EndomorphismField,
    MetricField,
    OneForm,
    TensorField,
    VectorField,
    apply,
    contract,
    derived,
    lie_bracket,
    lie_derivative,
    make_field,
)


class SingularMetricError(np.linalg.LinAlgError):
    pass


class TransportConvergenceError(RuntimeError):
    def __init__(self, achieved: float, steps: int):
        super().__init__(f"transport did not converge: successive refinements differ by {achieved:.3e} at {steps} steps/segment")
        self.achieved = achieved
        self.steps = steps


class NotTransverseError(ValueError):
    def __init__(self, violation: float):
        super().__init__(f"field is not a section of the transverse bundle: max |g(Y, xi)| = {violation:.3e}")
        self.violation = violation


class ChristoffelField(TensorField):
    """Gamma^k_ij stored as ``[k, i, j]``."""

    up, down = 1, 2

    def __init__(self, metric: MetricField, taylor):
        super().__init__(dim=metric.dim, taylor=taylor, name=f"Gamma[{metric.name}]")
        self.metric = metric


def _inverse(g_jet, pts):
    try:
        return jets.inv(g_jet)
    except np.linalg.LinAlgError:
        det = np.abs(np.linalg.det(g_jet.value))
        raise SingularMetricError(f"metric is singular at point {pts[int(np.argmin(det))].tolist()}") from None


def inverse_metric(g: MetricField) -> TensorField:
    def taylor(pts, order):
        return _inverse(g.taylor(pts, order), pts)

    return make_field(2, 0, g.dim, taylor, name=f"inv[{g.name}]")


def christoffel(g: MetricField) -> ChristoffelField:
    """Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)."""

    def taylor(pts, order):
        G = g.taylor(pts, order + 1)
        ginv = _inverse(G.truncate(order), pts)
        dG = G.grad()  # [b, i, j, l] = d_l g_ij
        s = (
            jets.einsum("bjli->bijl", dG)
            + jets.einsum("bilj->bijl", dG)
            - jets.einsum("bijl->bijl", dG)
        )
        return 0.5 * jets.einsum("bkl,bijl->bkij", ginv, s)

    return ChristoffelField(g, taylor)


def covariant_derivative(gamma: ChristoffelField, X: VectorField, Y: VectorField) -> VectorField:
    """(nabla_X Y)^k = X^i (d_i Y^k + Gamma^k_ij Y^j)."""

    def fn(x, y, G):
        return jets.einsum("bi,bki->bk", x, y.grad()) + jets.einsum("bkij,bi,bj->bk", G, x, y)

    def taylor(pts, order):
        return fn(X.taylor(pts, order), Y.taylor(pts, order + 1), gamma.taylor(pts, order))

    return make_field(1, 0, X.dim, taylor, name=f"nabla_{X.name}{Y.name}")


_IDX = "cdef"


def nabla(gamma: ChristoffelField, T: TensorField) -> TensorField:
    """Total covariant derivative; the derivative index is appended last."""
    if T.rank > 3:
        raise ValueError("covariant derivative implemented for rank <= 3")
    idx = _IDX[: T.rank]

    def taylor(pts, order):
        t = T.taylor(pts, order + 1)
        G = gamma.taylor(pts, order)
        out = t.grad()
        t = t.truncate(order)
        for pos, letter in enumerate(idx):
            swapped = idx.replace(letter, "k")
            if pos < T.up:
                out = out + jets.einsum(f"b{letter}ik,b{swapped}->b{idx}i", G, t)
            else:
                out = out - jets.einsum(f"bki{letter},b{swapped}->b{idx}i", G, t)
        return out

    return make_field(T.up, T.down + 1, T.dim, taylor, name=f"nabla[{T.name}]")


def covariant_along(gamma: ChristoffelField, T: TensorField, X: VectorField) -> TensorField:
    """nabla_X T, same rank as T."""
    idx = _IDX[: T.rank]
    return contract(f"{idx}i,i->{idx}", nabla(gamma, T), X, up=T.up, down=T.down, cls=type(T) if T.rank < 2 or T.up == 1 else TensorField)


def riemann_tensor(gamma: ChristoffelField) -> TensorField:
    """R^l_kij stored as ``[l, k, i, j]`` so that R(X, Y)Z = R[l,k,i,j] Z^k X^i Y^j."""

    def taylor(pts, order):
        G = gamma.taylor(pts, order + 1)
        dG = G.grad()  # [l, j, k, i] = d_i Gamma^l_jk
        G = G.truncate(order)
        return (
            jets.einsum("bljki->blkij", dG)
            - jets.einsum("blikj->blkij", dG)
            + jets.einsum("blim,bmjk->blkij", G, G)
            - jets.einsum("bljm,bmik->blkij", G, G)
        )

    return make_field(1, 3, gamma.dim, taylor, name=f"Riem[{gamma.metric.name}]")


def curvature_operator(R: TensorField, X: VectorField, Y: VectorField) -> EndomorphismField:
    """Endomorphism field R(X, Y)."""
    return contract("lkij,i,j->lk", R, X, Y, up=1, down=1)


def riemann(gamma: ChristoffelField, X: VectorField, Y: VectorField, Z: VectorField, points) -> np.ndarray:
    """Components of R(X, Y)Z at the given points."""
    R = riemann_tensor(gamma)
    return contract("lkij,k,i,j->l", R, Z, X, Y, up=1, down=0)(points)


def riemann_from_derivatives(gamma: ChristoffelField, X, Y, Z) -> VectorField:
    """R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z as a field."""
    nab = lambda A, B: covariant_derivative(gamma, A, B)
    return nab(X, nab(Y, Z)) - nab(Y, nab(X, Z)) - nab(lie_bracket(X, Y), Z)


def killing_residual(g: MetricField, xi: VectorField, points) -> float:
    """max |L_xi g| over the points."""
    return float(np.max(np.abs(lie_derivative(g, xi)(np.atleast_2d(points)))))


def metric_compatibility_residual(g: MetricField, gamma: ChristoffelField, points) -> float:
    return float(np.max(np.abs(nabla(gamma, g)(np.atleast_2d(points)))))


def metric_check(g: MetricField, points) -> dict:
    """Symmetry residual, smallest |det| and signature agreement over points."""
    vals = g(np.atleast_2d(points))
    sym = float(np.max(np.abs(vals - np.swapaxes(vals, -1, -2))))
    eig = np.linalg.eigvalsh(0.5 * (vals + np.swapaxes(vals, -1, -2)))
    sig = np.stack([(eig < 0).sum(axis=-1), (eig > 0).sum(axis=-1)], axis=-1)
    return {
        "symmetry": sym,
        "min_abs_det": float(np.min(np.abs(np.linalg.det(vals)))),
        "signature_ok": bool(np.all(sig == np.array(g.signature))),
    }


# transport ---------------------------------------------------------------------


class Polyline:
    """Batch of piecewise-linear coordinate paths; ``vertices`` is (B, S+1, n)."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim == 2:
            v = v[None]
        self.vertices = v

    @property
    def n_segments(self) -> int:
        return self.vertices.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.vertices.shape[2]

    @property
    def batch(self) -> int:
        return self.vertices.shape[0]

    def position(self, seg: int, s: float) -> np.ndarray:
        a, b = self.vertices[:, seg], self.vertices[:, seg + 1]
        return a + s * (b - a)

    def velocity(self, seg: int, s: float) -> np.ndarray:
        return self.vertices[:, seg + 1] - self.vertices[:, seg]

    def samples(self, seg: int, ts):
        a, b = self.vertices[:, seg], self.vertices[:, seg + 1]
        ts = np.asarray(ts, dtype=float)[:, None, None]
        return a[None] + ts * (b - a)[None], np.broadcast_to(b - a, (ts.shape[0],) + a.shape)

    def reversed(self) -> "Polyline":
        return Polyline(self.vertices[:, ::-1])

    def concat(self, other: "Polyline") -> "Polyline":
        return Polyline(np.concatenate([self.vertices, other.vertices[:, 1:]], axis=1))


_CHUNK = 2048


def path_samples(path, seg: int, ts) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities (T, B, n) of a path segment at parameters ``ts``."""
    if hasattr(path, "samples"):
        return path.samples(seg, ts)
    pos = np.stack([path.position(seg, t) for t in ts])
    vel = np.stack([path.velocity(seg, t) for t in ts])
    return pos, vel


def generator_table(generator, path, seg: int, ts) -> np.ndarray:
    """Generator matrices (T, B, n, n) on a segment, evaluated in batched chunks."""
    pos, vel = path_samples(path, seg, ts)
    T, B, n = pos.shape
    P, V = pos.reshape(-1, n), vel.reshape(-1, n)
    out = np.concatenate([generator(P[i:i + _CHUNK], V[i:i + _CHUNK]) for i in range(0, len(P), _CHUNK)])
    return out.reshape(T, B, n, n)


def _rk4(generator, path, U0, steps):
    U = U0.copy()
    h = 1.0 / steps
    ts = np.linspace(0.0, 1.0, 2 * steps + 1)
    for seg in range(path.n_segments):
        M = generator_table(generator, path, seg, ts)
        for i in range(steps):
            m0, m1, m2 = M[2 * i], M[2 * i + 1], M[2 * i + 2]
            k1 = m0 @ U
            k2 = m1 @ (U + h / 2 * k1)
            k3 = m1 @ (U + h / 2 * k2)
            k4 = m2 @ (U + h * k3)
            U = U + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return U


def linear_transport(generator, path, U0, *, tol: float = 1e-9, steps: int = 8, max_refine: int = 10):
    """Solve U' = M(c(t), c'(t)) U along ``path`` with RK4 and step doubling.

    Refines until successive solutions differ by less than ``tol`` and returns
    the Richardson-extrapolated solution.
    """
    U0 = np.asarray(U0, dtype=float)
    prev = _rk4(generator, path, U0, steps)
    err = np.inf
    for _ in range(max_refine):
        steps *= 2
        cur = _rk4(generator, path, U0, steps)
        err = float(np.max(np.abs(cur - prev), initial=0.0))
        if err < tol:
            return cur + (cur - prev) / 15.0
        prev = cur
    raise TransportConvergenceError(err, steps)


def _matrix_input(v0, batch, dim):
    """(n,) -> one vector; (n, m) -> m column vectors; (B, n, m) -> batched."""
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 1:
        return np.array(np.broadcast_to(v0[:, None], (batch, dim, 1))), True
    if v0.ndim == 2:
        return np.array(np.broadcast_to(v0, (batch,) + v0.shape)), False
    return np.array(v0), False


def parallel_transport(gamma: ChristoffelField, path, v0, *, tol: float = 1e-9, steps: int = 8, max_refine: int = 10):
    """Parallel transport of vectors along a batch of paths.

    ``v0`` is a vector ``(n,)`` or a matrix of column vectors ``(n, m)``;
    a leading batch axis is also accepted.  Passing the identity gives the
    transport matrix.
    """

    def generator(points, vel):
        G = gamma.taylor(points, 0).value
        return -np.einsum("bkij,bi->bkj", G, vel)

    U0, vec = _matrix_input(v0, path.batch, gamma.dim)
    U = linear_transport(generator, path, U0, tol=tol, steps=steps, max_refine=max_refine)
    return U[..., 0] if vec else U


# transverse connection -----------------------------------------------------------


class TransverseConnection:
    """Connection on the bundle of vectors orthogonal to a unit field ``xi``.

    With alpha = g(X, xi)/sigma and p the orthogonal projector,
    nabla^D_X Y = alpha p([xi, Y]) + p(nabla_{p X} Y).
    """

    def __init__(self, g: MetricField, xi: VectorField, sigma: int, *, check_tol: float = 1e-10):
        self.g = g
        self.xi = xi
        self.sigma = int(sigma)
        self.check_tol = check_tol
        self.gamma = christoffel(g)
        self.xi_flat = contract("ij,j->i", g, xi, up=0, down=1, cls=OneForm)
        s = float(self.sigma)
        self.projector = derived(
            1, 1, g.dim,
            lambda x, f: np.eye(g.dim) - jets.einsum("bi,bj->bij", x, f) / s,
            [xi, self.xi_flat],
            cls=EndomorphismField,
        )
        self.nabla_xi = contract("ij->ij", nabla(self.gamma, xi), up=1, down=1, cls=EndomorphismField)

    def project(self, X: VectorField) -> VectorField:
        return apply(self.projector, X)

    def alpha(self, X: VectorField):
        return contract("i,i->", self.xi_flat, X, up=0, down=0) * (1.0 / self.sigma)

    def _checked(self, Y: VectorField) -> VectorField:
        xi_flat, tol = self.xi_flat, self.check_tol

        def taylor(pts, order):
            y = Y.taylor(pts, order)
            viol = float(np.max(np.abs(np.einsum("bi,bi->b", y.value, xi_flat.taylor(pts, 0).value))))
            if viol > tol:
                raise NotTransverseError(viol)
            return y

        return make_field(1, 0, Y.dim, taylor, name=Y.name)

    def derivative(self, X: VectorField, Y: VectorField) -> VectorField:
        Y = self._checked(Y)
        t1 = self.project(lie_bracket(self.xi, Y)) * self.alpha(X)
        t2 = self.project(covariant_derivative(self.gamma, self.project(X), Y))
        return t1 + t2

    def curvature(self, X: VectorField, Y: VectorField, Z: VectorField) -> VectorField:
        d = self.derivative
        return d(X, d(Y, Z)) - d(Y, d(X, Z)) - d(lie_bracket(X, Y), Z)

    def endomorphism_derivative(self, X: VectorField, phi: EndomorphismField, Y: VectorField) -> VectorField:
        """(nabla^D_X phi) Y for an endomorphism preserving the transverse bundle."""
        return self.derivative(X, apply(phi, Y)) - apply(phi, self.derivative(X, Y))

    def transport_generator(self):
        gamma, xi, g, nxi, s = self.gamma, self.xi, self.g, self.nabla_xi, float(self.sigma)

        def generator(points, vel):
            G = gamma.taylor(points, 0).value
            x = xi.taylor(points, 0).value
            gv = g.taylor(points, 0).value
            N = nxi.taylor(points, 0).value
            alpha = np.einsum("bi,bij,bj->b", vel, gv, x) / s
            dxi = np.einsum("bmi,bi->bm", N, vel)
            return (
                -np.einsum("bkij,bi->bkj", G, vel)
                + alpha[:, None, None] * N
                - np.einsum("bk,bjm,bm->bkj", x, gv, dxi) / s
            )

        return generator

    def transport(self, path, v0, *, tol: float = 1e-9, steps: int = 8, max_refine: int = 10):
        """Transport of sections of D along a batch of paths (the D-component is preserved)."""
        U0, vec = _matrix_input(v0, path.batch, self.g.dim)
        U = linear_transport(self.transport_generator(), path, U0, tol=tol, steps=steps, max_refine=max_refine)
        return U[..., 0] if vec else U


def transverse_derivative(tc: TransverseConnection, X: VectorField, Y: VectorField) -> VectorField:
    return tc.derivative(X, Y)
