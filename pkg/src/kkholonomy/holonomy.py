"""Numerical holonomy algebras.

Two independent estimators are provided:

* Ambrose-Singer: curvature operators at sample points, conjugated back to
  the base point by parallel transport along straight coordinate paths;
* loop logarithms: log of the transport around small coordinate rectangles
  (possibly attached to the base point by a tail), divided by the area.

Both feed a Lie closure and a singular-value rank rule with an explicit
spectral-gap test.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import logm, subspace_angles

from .fields import MetricField, halton_points
from .levi_civita import Polyline, christoffel, parallel_transport, riemann_tensor

REL_RANK_TOL = 1e-6
ABS_RANK_FLOOR = 1e-9
GAP_RATIO = 1e3
MAX_GENERATIONS = 6


class HolonomyError(RuntimeError):
    pass


class LogarithmError(HolonomyError):
    pass


@dataclass(frozen=True)
class RankResult:
    dimension: int
    singular_values: np.ndarray
    gap_ratio: float

    @property
    def determinate(self) -> bool:
        return self.gap_ratio >= GAP_RATIO


def numerical_rank(singular_values, rel: float = REL_RANK_TOL, floor: float = ABS_RANK_FLOOR) -> RankResult:
    """Count singular values >= rel * largest; an all-small family has rank 0.

    The gap ratio is retained/discarded at the cut (infinite if nothing is
    discarded or the discarded value is exactly zero).
    """
    s = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    if s.size == 0 or s[0] < floor:
        return RankResult(0, s, np.inf if s.size == 0 or s[0] == 0 else floor / s[0])
    k = int(np.sum(s >= rel * s[0]))
    if k == s.size or s[k] == 0:
        gap = np.inf
    else:
        gap = float(s[k - 1] / s[k])
    return RankResult(k, s, gap)


def _flat(mats) -> np.ndarray:
    mats = np.asarray(mats, dtype=float)
    return mats.reshape(len(mats), -1) if mats.size else np.zeros((0, 1))


def span_basis(mats, rank: int | None = None):
    """Orthonormal (Frobenius) basis of the span of a family of matrices, with its rank data."""
    mats = np.asarray(mats, dtype=float)
    if len(mats) == 0:
        return mats, numerical_rank([])
    shape = mats.shape[1:]
    _, s, vt = np.linalg.svd(_flat(mats), full_matrices=False)
    rr = numerical_rank(s)
    k = rr.dimension if rank is None else rank
    return vt[:k].reshape((k,) + shape), rr


def lie_closure(mats, max_generations: int = MAX_GENERATIONS):
    """Lie algebra generated by ``mats``: (basis, generations, rank data).

    Brackets are added generation by generation until the numerical rank is
    the same for two consecutive generations.
    """
    mats = np.asarray(mats, dtype=float)
    scale = max(float(np.max(np.abs(mats))) if mats.size else 0.0, 1e-300)
    basis, rr = span_basis(mats / scale)
    if rr.dimension == 0:
        return basis, 0, rr
    for gen in range(1, max_generations + 1):
        k = len(basis)
        br = [basis[i] @ basis[j] - basis[j] @ basis[i] for i in range(k) for j in range(i + 1, k)]
        if not br:
            return basis, gen, rr
        new, new_rr = span_basis(np.concatenate([basis, np.array(br)]))
        if new_rr.dimension == rr.dimension:
            return basis, gen, rr
        basis, rr = new, new_rr
    raise HolonomyError(f"Lie closure did not stabilise within {max_generations} generations (rank {rr.dimension})")


def max_principal_angle(basis_a, basis_b) -> float:
    """Largest principal angle between two spans of matrices (radians)."""
    a, b = _flat(basis_a), _flat(basis_b)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float(np.pi / 2)
    return float(np.max(subspace_angles(a.T, b.T)))


def contains(basis_big, basis_small, tol: float = 1e-6) -> float:
    """Relative residual of projecting ``basis_small`` onto span(``basis_big``)."""
    small = _flat(basis_small)
    if len(small) == 0:
        return 0.0
    big = _flat(basis_big)
    if len(big) == 0:
        return float(np.max(np.linalg.norm(small, axis=1)))
    q, _ = np.linalg.qr(big.T)
    resid = small.T - q @ (q.T @ small.T)
    return float(np.max(np.linalg.norm(resid, axis=0) / np.linalg.norm(small, axis=1)))


@dataclass
class HolonomyEstimate:
    point: np.ndarray
    method: str
    generators: np.ndarray
    basis: np.ndarray
    generations: int
    rank: RankResult

    @property
    def dimension(self) -> int:
        return self.rank.dimension

    @property
    def singular_values(self) -> np.ndarray:
        return self.rank.singular_values

    @property
    def determinate(self) -> bool:
        return self.rank.determinate

    def summary(self) -> dict:
        return {
            "method": self.method,
            "dimension": self.dimension,
            "generations": self.generations,
            "gap_ratio": _finite(self.rank.gap_ratio),
            "determinate": self.determinate,
            "singular_values": [float(x) for x in self.singular_values],
            "n_generators": int(len(self.generators)),
        }


def _finite(x):
    return None if not np.isfinite(x) else float(x)


def estimate(point, method, generators, max_generations: int = MAX_GENERATIONS) -> HolonomyEstimate:
    gens = np.asarray(generators, dtype=float)
    basis, gen, rr = lie_closure(gens, max_generations)
    return HolonomyEstimate(np.asarray(point, dtype=float), method, gens, basis, gen, rr)


# connections -------------------------------------------------------------------


class LeviCivitaConnection:
    """Curvature and transport data of a metric, as consumed by the estimators."""

    def __init__(self, metric: MetricField, transport_tol: float = 1e-11):
        self.metric = metric
        self.dim = metric.dim
        self.gamma = christoffel(metric)
        self.R = riemann_tensor(self.gamma)
        self.transport_tol = transport_tol

    def curvature(self, points) -> np.ndarray:
        return self.R(np.atleast_2d(points))

    def transport(self, path, U0) -> np.ndarray:
        return parallel_transport(self.gamma, path, U0, tol=self.transport_tol, max_refine=14)


class TransverseHolonomyConnection:
    """Transport of a transverse connection (loop estimator only)."""

    def __init__(self, tc, transport_tol: float = 1e-11):
        self.tc = tc
        self.dim = tc.g.dim
        self.transport_tol = transport_tol

    def transport(self, path, U0) -> np.ndarray:
        return self.tc.transport(path, U0, tol=self.transport_tol, max_refine=14)


def straight_paths(o, targets) -> Polyline:
    o = np.asarray(o, dtype=float)
    targets = np.atleast_2d(targets)
    return Polyline(np.stack([np.broadcast_to(o, targets.shape), targets], axis=1))


class Representation:
    """Restriction of endomorphisms of T_o to an invariant subspace, modulo a kernel.

    ``columns`` spans the subspace of interest; ``coords`` maps a vector to
    its coordinates in that basis (after quotienting).  The default is the
    identity representation.
    """

    def __init__(self, dim: int, columns=None, coords=None):
        self.columns = np.eye(dim) if columns is None else np.asarray(columns, dtype=float)
        self._coords = coords

    def __call__(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        img = M @ self.columns
        return img if self._coords is None else self._coords(img)


def ambrose_singer_generators(conn, o, samples, directions=None, rep: Representation | None = None,
                              include_base: bool = True, max_generations: int = MAX_GENERATIONS) -> HolonomyEstimate:
    """P^-1 R(P u, P w) P over samples and pairs of directions, followed by Lie closure.

    ``directions`` (n, m) are the tangent directions at ``o`` whose pairs are
    inserted into the curvature (all coordinate directions by default).
    Generators are ordered by sample index, then by direction pair.
    """
    o = np.asarray(o, dtype=float)
    n = conn.dim
    samples = np.atleast_2d(samples)
    if include_base:
        samples = np.concatenate([o[None], samples])
    dirs = np.eye(n) if directions is None else np.asarray(directions, dtype=float)
    P = conn.transport(straight_paths(o, samples), np.eye(n))  # (B, n, n): T_o -> T_s
    Pinv = np.linalg.inv(P)
    R = conn.curvature(samples)  # [b, l, k, i, j]
    U = P @ dirs  # transported directions (B, n, m)
    m = dirs.shape[1]
    gens = []
    for b in range(len(samples)):
        for a in range(m):
            for c in range(a + 1, m):
                Rs = np.einsum("lkij,i,j->lk", R[b], U[b, :, a], U[b, :, c])
                G = Pinv[b] @ Rs @ P[b]
                gens.append(G if rep is None else rep(G))
    return estimate(o, "ambrose-singer", gens, max_generations)


def rectangle_loops(o, planes, h: float, centers=None) -> tuple[Polyline, list]:
    """Coordinate rectangles of side h in the given planes, attached to ``o``
    by straight tails to each centre (the centre is the rectangle's corner)."""
    o = np.asarray(o, dtype=float)
    centers = [o] if centers is None else [np.asarray(c, dtype=float) for c in centers]
    loops, labels = [], []
    for ci, c in enumerate(centers):
        for (i, j) in planes:
            ei, ej = np.zeros_like(o), np.zeros_like(o)
            ei[i], ej[j] = h, h
            loops.append([o, c, c + ei, c + ei + ej, c + ej, c, o])
            labels.append((ci, i, j))
    return Polyline(np.array(loops)), labels


def _guarded_log(P) -> np.ndarray:
    dev = float(np.linalg.norm(P - np.eye(len(P)), 2))
    if dev >= 0.5:
        raise LogarithmError(f"loop transport too far from the identity (|P - I| = {dev:.3f})")
    L = logm(P)
    return np.real_if_close(L, tol=1e6).real


def loop_holonomy(conn, o, planes=None, h: float = 0.02, centers=None, rep: Representation | None = None,
                  max_shrink: int = 6, max_generations: int = MAX_GENERATIONS) -> HolonomyEstimate:
    """log(transport around loop) / area for small rectangles; the area shrinks when a log is not safe."""
    o = np.asarray(o, dtype=float)
    n = conn.dim
    if planes is None:
        planes = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for _ in range(max_shrink + 1):
        path, _labels = rectangle_loops(o, planes, h, centers)
        P = conn.transport(path, np.eye(n))
        try:
            gens = []
            for Pk in P:
                gens.append(_guarded_log(Pk if rep is None else rep(Pk)) / h**2)
            est = estimate(o, "loop-log", gens, max_generations)
            est.area = h**2
            return est
        except LogarithmError:
            h *= 0.5
    raise LogarithmError(f"loop transports stayed far from the identity down to side {h:.2e}")


def skew_residual(basis, gram) -> float:
    """max |G^T g + g G| over a normalised basis of generators."""
    if len(basis) == 0:
        return 0.0
    gram = np.asarray(gram, dtype=float)
    out = 0.0
    for G in basis:
        G = G / max(np.linalg.norm(G), 1e-300)
        out = max(out, float(np.max(np.abs(G.T @ gram + gram @ G))))
    return out


# adapted frames and block patterns ---------------------------------------------------


@dataclass
class AdaptedFrame:
    """Columns (r, s_1..s_k, r~) at a point of a recurrent bundle."""

    point: np.ndarray
    matrix: np.ndarray
    gram: np.ndarray
    sigma: int
    phi_screen: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.matrix.shape[1] - 2

    def screen_gram(self) -> np.ndarray:
        return self.gram[1:-1, 1:-1]

    def checks(self) -> dict:
        G, s = self.gram, self.sigma
        return {
            "g(r,r)": abs(G[0, 0]),
            "g(r,r~)-2sigma": abs(G[0, -1] - 2 * s),
            "g(r,s)": float(np.max(np.abs(G[0, 1:-1]), initial=0.0)),
            "g(r~,s)": float(np.max(np.abs(G[-1, 1:-1]), initial=0.0)),
            "screen_det": float(abs(np.linalg.det(self.screen_gram()))) if self.k else 1.0,
        }

    def to_frame(self, M) -> np.ndarray:
        return np.linalg.solve(self.matrix, M @ self.matrix)


def adapted_frame(rb, o, transverse_basis=None) -> AdaptedFrame:
    """Adapted frame of a recurrent bundle at ``o``.

    ``transverse_basis`` (n_B, k) is a basis of xi-perp at the base point; by
    default an orthonormal-ish basis extracted from the projector.
    """
    o = np.atleast_2d(o)
    nb = rb.g.dim
    b = o[:, :nb]
    r = rb.r(o)[0]
    rt = rb.r_tilde(o)[0]
    if transverse_basis is None:
        Pm = rb.tc.projector(b)[0]
        u, s, _ = np.linalg.svd(Pm)
        transverse_basis = u[:, : nb - 1]
    E = np.asarray(transverse_basis, dtype=float)
    a0 = rb.a0(b)[0]
    S = np.vstack([E, -a0 @ E])  # iota of the transverse basis
    F = np.column_stack([r, S, rt])
    Gm = rb.metric(o)[0]
    phi = rb.phi(b)[0]
    # phi on the transverse basis, in the same basis
    phi_s = np.linalg.lstsq(E, phi @ E, rcond=None)[0]
    return AdaptedFrame(o[0], F, F.T @ Gm @ F, rb.sigma, phi_s)


@dataclass
class BlockPattern:
    first_column: float
    last_row: float
    screen_skew: float
    phi_commuting: float | None
    screen_dimension: int
    u_dimension: int
    offending: dict = field(default_factory=dict)

    def passed(self, tol: float = 1e-6) -> bool:
        vals = [self.first_column, self.last_row, self.screen_skew]
        if self.phi_commuting is not None:
            vals.append(self.phi_commuting)
        return all(np.isfinite(v) and v < tol for v in vals)

    def as_dict(self, tol: float = 1e-6) -> dict:
        return {
            "first_column": self.first_column,
            "last_row": self.last_row,
            "screen_skew": self.screen_skew,
            "phi_commuting": self.phi_commuting,
            "screen_dimension": self.screen_dimension,
            "u_dimension": self.u_dimension,
            "offending_generator": self.offending,
            "tolerance": tol,
            "passed": self.passed(tol),
        }


def classify_block_structure(est: HolonomyEstimate, frame: AdaptedFrame, check_phi: bool = False) -> BlockPattern:
    """Block pattern of a holonomy algebra in the adapted frame (r, screen, r~).

    Violations are measured on the Frobenius-normalised closure basis.
    """
    viol = {"first_column": 0.0, "last_row": 0.0, "screen_skew": 0.0, "phi_commuting": 0.0}
    worst = {}
    screens, us = [], []
    Gs = frame.screen_gram()
    J = frame.phi_screen
    for idx, B in enumerate(est.basis):
        M = frame.to_frame(B)
        M = M / max(np.linalg.norm(M), 1e-300)
        A = M[1:-1, 1:-1]
        cells = {
            "first_column": float(np.max(np.abs(M[:, 0]))),
            "last_row": float(np.max(np.abs(M[-1, :]))),
            "screen_skew": float(np.max(np.abs(A.T @ Gs + Gs @ A), initial=0.0)),
            "phi_commuting": float(np.max(np.abs(A @ J - J @ A), initial=0.0)) if (check_phi and J is not None) else 0.0,
        }
        for key, val in cells.items():
            if val > viol[key]:
                viol[key] = val
                worst[key] = idx
        screens.append(A)
        us.append(M[1:-1, -1])
    sd = span_basis(np.array(screens))[1].dimension if screens else 0
    ud = numerical_rank(np.linalg.svd(np.array(us), compute_uv=False)).dimension if us and np.size(us) else 0
    return BlockPattern(
        viol["first_column"], viol["last_row"], viol["screen_skew"],
        viol["phi_commuting"] if check_phi else None, sd, ud, worst,
    )


# transverse holonomy --------------------------------------------------------------


def verify_transverse_holonomy_pullback(kk, base_conn: LeviCivitaConnection, base_paths: Polyline, theta0=0.0,
                                        fibre_theta: float = 2 * np.pi, tol: float = 1e-11) -> dict:
    """Transverse transport of horizontal vectors along horizontal lifts versus base transport.

    Returns residuals of ``lift(P_base w) - P_D(lift w)`` over the paths and
    of the transport around a pure fibre circle acting on horizontal vectors.
    """
    from .circle_bundle import HorizontalLift

    tc = kk.fibre_transverse()
    n = kk.g.dim
    lift_path = HorizontalLift(base_paths, kk.a, theta0)
    start = base_paths.vertices[:, 0]
    end = base_paths.vertices[:, -1]
    a_start = kk.a(start)
    a_end = kk.a(end)
    W = np.eye(n)
    lifts0 = np.concatenate([np.broadcast_to(W, (len(start), n, n)), -np.einsum("bi,ij->bj", a_start, W)[:, None, :]], axis=1)
    Pd = tc.transport(lift_path, lifts0, tol=tol, max_refine=14)
    Pb = base_conn.transport(base_paths, W)
    expect = np.concatenate([Pb, -np.einsum("bi,bij->bj", a_end, Pb)[:, None, :]], axis=1)
    pull = float(np.max(np.abs(Pd - expect)))
    # fibre circle through the start points
    pts0 = np.column_stack([start, np.broadcast_to(np.asarray(theta0, dtype=float), (len(start),))])
    ks = 8
    verts = np.stack([pts0 + np.outer(np.ones(len(pts0)), np.r_[np.zeros(n), fibre_theta * t / ks]) for t in range(ks + 1)], axis=1)
    Pf = tc.transport(Polyline(verts), lifts0, tol=tol, max_refine=14)
    fibre = float(np.max(np.abs(Pf - lifts0)))
    return {"pullback": pull, "fibre": fibre, "end_theta": lift_path.end_theta()}


def transverse_loop_holonomy(kk, o, h: float = 0.02, planes=None, centers=None) -> HolonomyEstimate:
    """Loop estimate of the transverse holonomy on the horizontal bundle of a KK metric,
    expressed in the basis of horizontal lifts of the base coordinate vectors."""
    tc = kk.fibre_transverse()
    conn = TransverseHolonomyConnection(tc)
    o = np.asarray(o, dtype=float)
    n = kk.g.dim
    a = kk.a(o[:n][None])[0]
    E = np.vstack([np.eye(n), -a[None, :]])

    def coords(img):
        return img[:n]  # horizontal vectors are determined by their base part

    rep = Representation(n + 1, E, coords)
    if planes is None:
        planes = [(i, j) for i in range(n + 1) for j in range(i + 1, n + 1)]
    return loop_holonomy(conn, o, planes, h, centers, rep=rep)


def transverse_holonomy(tc, o, h: float = 0.02, planes=None, centers=None, basis=None) -> HolonomyEstimate:
    """Loop estimate of the holonomy of a transverse connection on xi-perp at ``o``,
    in the basis ``basis`` (n, n-1) of xi-perp (taken from the projector by default)."""
    o = np.asarray(o, dtype=float)
    n = tc.g.dim
    if basis is None:
        u, _, _ = np.linalg.svd(tc.projector(o[None])[0])
        basis = u[:, : n - 1]
    E = np.asarray(basis, dtype=float)

    def coords(img):
        return np.linalg.lstsq(E, img, rcond=None)[0]

    rep = Representation(n, E, coords)
    return loop_holonomy(TransverseHolonomyConnection(tc), o, planes, h, centers, rep=rep)


def screen_representation(rb, frame: AdaptedFrame) -> Representation:
    """Action on the screen r-perp/<r>, in the basis q(s_i) of the adapted frame."""
    F = frame.matrix

    def coords(img):
        c = np.linalg.solve(F, img)
        return c[1:-1]

    return Representation(F.shape[0], F[:, 1:-1], coords)


def sample_box(center, half_widths, n: int) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    hw = np.broadcast_to(np.asarray(half_widths, dtype=float), c.shape)
    return halton_points(np.column_stack([c - hw, c + hw]), n)


# leaf and screen holonomy ---------------------------------------------------------


def leaf_paths(rb, o, base_targets):
    """Straight base paths from pi(o) lifted into the leaf of r-perp through o.

    r-perp is the horizontal distribution of the flat potential a0, so leaf
    curves are horizontal lifts for a0.
    """
    from .circle_bundle import HorizontalLift

    o = np.asarray(o, dtype=float)
    nb = rb.g.dim
    base = straight_paths(o[:nb], base_targets)
    return HorizontalLift(base, rb.a0, o[nb])


def leaf_loops(rb, o, planes, h: float, base_centers=None):
    from .circle_bundle import HorizontalLift

    o = np.asarray(o, dtype=float)
    nb = rb.g.dim
    base, _ = rectangle_loops(o[:nb], planes, h, base_centers)
    return HorizontalLift(base, rb.a0, o[nb])


def leaf_directions(rb, o) -> np.ndarray:
    """iota of the base coordinate vectors at o: a basis of r-perp."""
    o = np.asarray(o, dtype=float)
    nb = rb.g.dim
    a0 = rb.a0(o[None, :nb])[0]
    return np.vstack([np.eye(nb), -a0[None, :]])


def screen_holonomy(rb, o, base_samples, frame: AdaptedFrame, conn: LeviCivitaConnection | None = None,
                    include_base: bool = True) -> HolonomyEstimate:
    """Ambrose-Singer estimate of the holonomy of the screen connection on the leaf through o,
    represented on the screen basis of ``frame``."""
    conn = conn or LeviCivitaConnection(rb.metric)
    o = np.asarray(o, dtype=float)
    nb = rb.g.dim
    targets = np.atleast_2d(base_samples)
    if include_base:
        targets = np.concatenate([o[None, :nb], targets])
    path = leaf_paths(rb, o, targets)
    n = rb.dim
    P = conn.transport(path, np.eye(n))
    Pinv = np.linalg.inv(P)
    ends = path.position(path.n_segments - 1, 1.0)
    R = conn.curvature(ends)
    dirs = leaf_directions(rb, o)
    U = P @ dirs
    rep = screen_representation(rb, frame)
    gens = []
    for b in range(len(ends)):
        for a in range(nb):
            for c in range(a + 1, nb):
                Rs = np.einsum("lkij,i,j->lk", R[b], U[b, :, a], U[b, :, c])
                gens.append(rep(Pinv[b] @ Rs @ P[b]))
    return estimate(o, "screen-ambrose-singer", gens)


def screen_loop_holonomy(rb, o, frame: AdaptedFrame, h: float = 0.02, base_centers=None,
                         conn: LeviCivitaConnection | None = None) -> HolonomyEstimate:
    conn = conn or LeviCivitaConnection(rb.metric)
    nb = rb.g.dim
    planes = [(i, j) for i in range(nb) for j in range(i + 1, nb)]
    rep = screen_representation(rb, frame)
    for _ in range(7):
        path = leaf_loops(rb, o, planes, h, base_centers)
        P = conn.transport(path, np.eye(rb.dim))
        try:
            gens = [_guarded_log(rep(Pk)) / h**2 for Pk in P]
            return estimate(o, "screen-loop-log", gens)
        except LogarithmError:
            h *= 0.5
    raise LogarithmError("screen loop transports stayed far from the identity")


def verify_screen_holonomy(rb, o, frame: AdaptedFrame, base_conn: LeviCivitaConnection, base_point, base_samples,
                           leaf_samples) -> dict:
    """Screen holonomy on the leaf through o against the holonomy of the bottom base.

    ``frame`` must use the lifts of the bottom base's coordinate vectors as
    its screen basis so that both families are written in the same basis.
    """
    scr = screen_holonomy(rb, o, leaf_samples, frame)
    base = ambrose_singer_generators(base_conn, base_point, base_samples)
    angle = max_principal_angle(scr.basis, base.basis) if scr.dimension == base.dimension else float(np.pi / 2)
    return {
        "screen": scr,
        "base": base,
        "dimension_equal": scr.dimension == base.dimension,
        "max_principal_angle": angle,
    }
