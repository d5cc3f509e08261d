"""Quadrature for singular double integrals over pairs of simplices.

For touching pairs (identical, shared edge, shared vertex) the product
T x T' is rewritten in relative coordinates z that vanish exactly on the
singular set. The z-domain splits into simplicial cones {z = rho * zeta},
zeta on a base where a piecewise-linear gauge c(z) equals one, and the
remaining free variables (position along the shared part) range over a set
whose size is (1 - rho)^m. The radial variable rho carries the weight
rho^(k-1-alpha) (1-rho)^m and is integrated with Gauss-Jacobi; the base,
the free variables and the remaining angular kernel |M zeta|^(-alpha) are
smooth and use Gauss-Legendre / collapsed (Stroud) rules.

If the integrand depends on (x, y) only through the direction of x - y,
as the nonlocal difference quotients of continuous piecewise-linear
functions do, a single radial and a single free-variable point is exact;
:func:`touching_rule` with ``n_rad = n_aux = 1`` is then used by assembly.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import DomainError


class PairClass(Enum):
    IDENTICAL = "identical"
    SHARED_EDGE = "shared_edge"
    SHARED_VERTEX = "shared_vertex"
    DISJOINT = "disjoint"


@dataclass(frozen=True)
class QuadratureConfig:
    """Quadrature orders.

    ``n_far`` selects the rule for pairs whose centroid distance is at
    least ``far_factor`` times the larger diameter; closer disjoint pairs
    use ``n_reg``. ``far_factor`` must be at least 2 so that touching pairs
    are never treated as far. ``n_reg=None`` picks 6 points in 1d and the
    3-point rule in 2d; ``n_far=None`` picks 3 in 1d and the one-point
    centroid rule in 2d, where far pairs dominate the cost.
    """

    n_sing: int = 5
    n_reg: int | None = None
    n_theta: int | None = None
    n_rad: int = 20
    n_far: int | None = None
    far_factor: float = 4.0

    def __post_init__(self):
        for name in ("n_sing", "n_reg", "n_rad", "n_far"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.n_theta is not None and self.n_theta < 1:
            raise DomainError("n_theta must be >= 1")
        if self.far_factor < 2.0:
            # touching pairs always have centroid distance below 2 * max diameter
            raise DomainError("far_factor must be >= 2")

    def reg_points(self, d: int) -> int:
        if self.n_reg is not None:
            return self.n_reg
        return 6 if d == 1 else 3

    def far_points(self, d: int) -> int:
        if self.n_far is not None:
            return self.n_far
        return 3 if d == 1 else 1

    def theta_points(self, d: int) -> int:
        if self.n_theta is not None:
            return self.n_theta if d == 2 else 2
        return 16 if d == 2 else 2


# ---------------------------------------------------------------------------
# one-dimensional and simplex rules

@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi01(n: int, a: float, b: float):
    """Nodes/weights on (0,1) for the weight (1-t)^a t^b."""
    x, w = roots_jacobi(n, a, b)
    return 0.5 * (x + 1.0), w / 2.0 ** (a + b + 1.0)


@lru_cache(maxsize=None)
def simplex_rule(d: int, n: int):
    """Barycentric points and weights (summing to 1) on the reference simplex.

    1d: Gauss-Legendre; 2d: Stroud conical product (Gauss-Jacobi(1,0) times
    Gauss-Legendre), exact for polynomials of degree 2n-1.
    """
    if d == 1:
        t, w = gauss_legendre01(n)
        lam = np.stack([1.0 - t, t], axis=1)
        return lam, w
    u, wu = gauss_jacobi01(n, 1.0, 0.0)      # weight (1-u)
    v, wv = gauss_legendre01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    x1 = U.ravel()
    x2 = ((1.0 - U) * V).ravel()
    w = (wu[:, None] * wv[None, :]).ravel() * 2.0
    lam = np.stack([1.0 - x1 - x2, x1, x2], axis=1)
    return lam, w


def _strang_fix3():
    a, b = 2.0 / 3.0, 1.0 / 6.0
    return np.array([(a, b, b), (b, a, b), (b, b, a)]), np.full(3, 1.0 / 3.0)


def _radon7():
    a1, b1 = 0.059715871789769820, 0.470142064105115089
    a2, b2 = 0.797426985353087322, 0.101286507323456339
    w1, w2 = 0.132394152788506181, 0.125939180544827153
    lam = [(1 / 3, 1 / 3, 1 / 3)]
    for a, b in ((a1, b1), (a2, b2)):
        lam += [(a, b, b), (b, a, b), (b, b, a)]
    w = [0.225] + [w1] * 3 + [w2] * 3
    return np.array(lam), np.array(w)


@lru_cache(maxsize=None)
def compact_rule(d: int, n: int):
    """Symmetric rules with fewer points than :func:`simplex_rule` in 2d:
    the 7-point degree-5 rule for n = 3 (same degree) and the 3-point
    degree-2 rule for n = 2 (one degree lower)."""
    if d == 2 and n == 3:
        return _radon7()
    if d == 2 and n == 2:
        return _strang_fix3()
    return simplex_rule(d, n)


def _triangle_points(n):
    """Points (k, 2) and weights summing to 1/2 on the unit right triangle."""
    lam, w = simplex_rule(2, n)
    return lam[:, 1:], 0.5 * w


# ---------------------------------------------------------------------------
# classification and canonical ordering

def classify_pair(T, Tp) -> PairClass:
    """Classify two simplices (vertex index tuples) by shared vertices."""
    T, Tp = tuple(int(i) for i in T), tuple(int(i) for i in Tp)
    shared = len(set(T) & set(Tp))
    d = len(T) - 1
    if shared == d + 1:
        return PairClass.IDENTICAL
    if shared == 0:
        return PairClass.DISJOINT
    if shared == 1:
        return PairClass.SHARED_VERTEX
    if d == 2 and shared == 2:
        return PairClass.SHARED_EDGE
    raise ValueError(f"cannot classify pair {T}, {Tp}")


def canonical_order(T, Tp):
    """Reorder vertex labels so shared vertices come first, in ascending
    label order, followed by the remaining vertices."""
    T, Tp = list(T), list(Tp)
    shared = sorted(set(T) & set(Tp))
    if len(shared) == len(T):
        return T, list(T)
    rest_T = [v for v in T if v not in shared]
    rest_Tp = [v for v in Tp if v not in shared]
    return shared + rest_T, shared + rest_Tp


# ---------------------------------------------------------------------------
# touching-pair rules

@dataclass(frozen=True)
class TouchingRule:
    """Reference rule for one touching class.

    For a pair with canonically ordered vertex arrays X (d+1, d), Y (d+1, d)
    and affine Jacobians A_T, A_T', the integral
    int int f(x, y) |x-y|^(-alpha) dx dy is approximated by

        |det A_T| |det A_T'| sum_k weight_k f(x_k, y_k) (|x_k-y_k| / rho_k)^(-alpha)

    with x_k = lam_x[k] @ X and y_k = lam_y[k] @ Y.
    """

    lam_x: np.ndarray
    lam_y: np.ndarray
    rho: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.weight)


_ID2_BASES = [((1, 0), (0, 1)), ((1, 0), (1, -1)), ((1, -1), (0, -1)),
              ((0, -1), (-1, 0)), ((-1, 0), (-1, 1)), ((-1, 1), (0, 1))]

# cones of the shared-edge case in z = (w, lambda, kappa); the last three are
# images of the first three under (w, l, k) -> (-w, k, l), which swaps T, T'
_EDGE_BASES = [((0, 0, 1), (0, 1, 1), (1, 0, 1)),
               ((1, 0, 0), (0, 1, 0), (0, 1, 1)),
               ((1, 0, 0), (0, 1, 1), (1, 0, 1)),
               ((0, 1, 0), (0, 1, 1), (-1, 1, 0)),
               ((-1, 0, 0), (0, 0, 1), (0, 1, 1)),
               ((-1, 0, 0), (0, 1, 1), (-1, 1, 0))]


def _bary1(t):
    return np.stack([1.0 - t, t], axis=-1)


def _bary2(p):
    return np.stack([1.0 - p[..., 0] - p[..., 1], p[..., 0], p[..., 1]], axis=-1)


@lru_cache(maxsize=None)
def touching_rule(cls: PairClass, d: int, alpha: float, n_ang: int,
                  n_rad: int = 1, n_aux: int = 1) -> TouchingRule:
    """Build the reference rule for a touching class.

    ``n_ang`` points per dimension on the cone bases, ``n_rad`` Gauss-Jacobi
    points in the radial variable and ``n_aux`` points per dimension for the
    free variables along the shared part.
    """
    if cls == PairClass.DISJOINT:
        raise ValueError("disjoint pairs use tensor rules")
    LX, LY, RH, WT = [], [], [], []

    def push(lx, ly, rho, w):
        LX.append(lx.reshape(-1, d + 1))
        LY.append(ly.reshape(-1, d + 1))
        RH.append(np.broadcast_to(rho, w.shape).ravel())
        WT.append(w.ravel())

    if d == 1 and cls == PairClass.IDENTICAL:
        r, wr = gauss_jacobi01(n_rad, 1.0, -alpha)
        xi, wxi = gauss_legendre01(n_aux)
        for sgn in (1.0, -1.0):
            R, XI = np.meshgrid(r, xi, indexing="ij")
            z = sgn * R
            c = np.abs(z)
            xh = np.maximum(0.0, -z) + (1.0 - c) * XI
            yh = xh + z
            push(_bary1(xh), _bary1(yh), R, wr[:, None] * wxi[None, :])
    elif d == 1 and cls == PairClass.SHARED_VERTEX:
        r, wr = gauss_jacobi01(n_rad, 0.0, 1.0 - alpha)
        eta, we = gauss_legendre01(n_ang)
        R, E = np.meshgrid(r, eta, indexing="ij")
        w = wr[:, None] * we[None, :]
        push(_bary1(R), _bary1(R * E), R, w)          # x-hat = 1 on the base
        push(_bary1(R * E), _bary1(R), R, w)          # y-hat = 1 on the base
    elif d == 2 and cls == PairClass.IDENTICAL:
        r, wr = gauss_jacobi01(n_rad, 2.0, 1.0 - alpha)
        eta, we = gauss_legendre01(n_ang)
        xi, wxi = _triangle_points(n_aux)
        for P, Q in _ID2_BASES:
            P, Q = np.array(P, float), np.array(Q, float)
            jac = abs(P[0] * Q[1] - P[1] * Q[0])
            zeta = P[None, :] + eta[:, None] * (Q - P)[None, :]          # (ne, 2)
            z = r[:, None, None, None] * zeta[None, :, None, :]          # (nr, ne, 1, 2)
            c = (np.maximum(0, -z[..., 0]) + np.maximum(0, -z[..., 1])
                 + np.maximum(0, z[..., 0] + z[..., 1]))
            a = np.maximum(0.0, -z)
            xh = a + (1.0 - c)[..., None] * xi[None, None, :, :]
            yh = xh + z
            w = jac * wr[:, None, None] * we[None, :, None] * wxi[None, None, :]
            R = np.broadcast_to(r[:, None, None], w.shape)
            push(_bary2(xh), _bary2(yh), R, w)
    elif d == 2 and cls == PairClass.SHARED_EDGE:
        r, wr = gauss_jacobi01(n_rad, 1.0, 2.0 - alpha)
        beta, wb = _triangle_points(n_ang)
        tau, wt = gauss_legendre01(n_aux)
        for V in _EDGE_BASES:
            V = np.array(V, float)
            jac = abs(np.linalg.det(V))
            zeta = V[0] + beta[:, :1] * (V[1] - V[0]) + beta[:, 1:] * (V[2] - V[0])
            z = r[:, None, None, None] * zeta[None, :, None, :]          # (nr, nb, 1, 3)
            w_, l_, k_ = z[..., 0], z[..., 1], z[..., 2]
            c = np.maximum(k_, l_ + w_) + np.maximum(0.0, -w_)
            nu = np.maximum(0.0, -w_) + (1.0 - c) * tau[None, None, :]
            mu = nu + w_
            lx = np.stack([1.0 - mu - l_, mu, np.broadcast_to(l_, mu.shape)], axis=-1)
            ly = np.stack([1.0 - nu - k_, nu, np.broadcast_to(k_, nu.shape)], axis=-1)
            w = jac * wr[:, None, None] * wb[None, :, None] * wt[None, None, :]
            R = np.broadcast_to(r[:, None, None], w.shape)
            push(lx, ly, R, w)
    elif d == 2 and cls == PairClass.SHARED_VERTEX:
        r, wr = gauss_jacobi01(n_rad, 0.0, 3.0 - alpha)
        sig, ws = gauss_legendre01(n_ang)
        tri, wtri = _triangle_points(n_ang)
        base_edge = np.stack([1.0 - sig, sig], axis=1)                  # |x-hat|_1 = 1
        E = r[:, None, None, None] * base_edge[None, :, None, :]
        F = r[:, None, None, None] * tri[None, None, :, :]
        E, F = np.broadcast_arrays(E, F)
        w = wr[:, None, None] * ws[None, :, None] * wtri[None, None, :]
        R = np.broadcast_to(r[:, None, None], w.shape)
        push(_bary2(E), _bary2(F), R, w)
        push(_bary2(F), _bary2(E), R, w)
    else:
        raise ValueError(f"class {cls} not available in d={d}")
    return TouchingRule(np.concatenate(LX), np.concatenate(LY),
                        np.concatenate(RH), np.concatenate(WT))


# ---------------------------------------------------------------------------
# generic pair integral

def _coords_class(X, Y, tol=1e-14):
    """Shared-vertex structure of two coordinate simplices."""
    match = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2) <= tol
    return match


def _abs_det(X):
    J = (X[1:] - X[0]).T
    return abs(np.linalg.det(J))


def pair_integral(T, Tp, cls: PairClass | None, integrand, kernel_exponent: float,
                  config: QuadratureConfig | None = None) -> float:
    """Approximate the double integral of ``integrand(x, y) * |x-y|^(-alpha)``.

    Parameters
    ----------
    T, Tp : (d+1, d) vertex coordinates
    cls : pair class, or None to detect it from coincident vertices
    integrand : vectorized callable taking point arrays x, y of shape (k, d)
    kernel_exponent : alpha < d
    """
    cfg = config or QuadratureConfig()
    X = np.asarray(T, dtype=float)
    Y = np.asarray(Tp, dtype=float)
    if X.ndim == 1:                     # intervals given as endpoint lists
        X, Y = X[:, None], Y[:, None]
    d = X.shape[1]
    alpha = float(kernel_exponent)
    if alpha >= d:
        raise DomainError(f"kernel exponent {alpha} >= d={d} is not integrable")
    match = _coords_class(X, Y)
    shared = int(match.any(axis=1).sum())
    if shared == d + 1:
        detected = PairClass.IDENTICAL
    else:
        detected = {0: PairClass.DISJOINT, 1: PairClass.SHARED_VERTEX,
                    2: PairClass.SHARED_EDGE}[shared]
    if cls is None:
        cls = detected
    if cls != detected:
        raise ValueError(f"pair class {cls} does not match geometry ({detected})")

    if cls == PairClass.DISJOINT:
        lam, w = simplex_rule(d, cfg.reg_points(d))
        x = lam @ X
        y = lam @ Y
        xx = np.repeat(x, len(y), axis=0)
        yy = np.tile(y, (len(x), 1))
        ww = np.outer(w, w).ravel() * _volume(X) * _volume(Y)
        r = np.linalg.norm(xx - yy, axis=1)
        return float(np.sum(ww * integrand(xx, yy) * r ** (-alpha)))

    # canonical order: shared vertices (sorted lexicographically) first
    if cls == PairClass.IDENTICAL:
        Xc, Yc = X, X.copy()
    else:
        si = [i for i in range(d + 1) if match[i].any()]
        sj = [int(np.flatnonzero(match[i])[0]) for i in si]
        order = np.lexsort(X[si].T[::-1])
        si = [si[k] for k in order]
        sj = [sj[k] for k in order]
        ri = [i for i in range(d + 1) if i not in si]
        rj = [j for j in range(d + 1) if j not in sj]
        Xc, Yc = X[si + ri], Y[sj + rj]
    n = cfg.n_sing
    rule = touching_rule(cls, d, alpha, n, n, n)
    x = rule.lam_x @ Xc
    y = rule.lam_y @ Yc
    r = np.linalg.norm(x - y, axis=1)
    jac = _abs_det(Xc) * _abs_det(Yc)
    kern = (r / rule.rho) ** (-alpha)
    return float(jac * np.sum(rule.weight * integrand(x, y) * kern))


def _volume(X):
    d = X.shape[1]
    return _abs_det(X) / (1.0 if d == 1 else 2.0)


# ---------------------------------------------------------------------------
# far-field tail beyond Lambda

TAIL_POWER = {"F": 0, "G": 1, "Gtilde": 2}


def tail_directions(d: int, cfg: QuadratureConfig):
    """Unit directions and angular weights for the sphere integral."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    n = cfg.theta_points(2)
    th = (np.arange(n) + 0.5) * 2 * np.pi / n
    return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(n, 2 * np.pi / n)


def tail_samples(points, mesh, s: float, cfg: QuadratureConfig):
    """Radial/angular samples for integrals over the complement of Lambda.

    For every point x returns ``factor`` and ``weight`` of shape (n, k) so that,
    for u(y) = 0 outside Lambda and c = u(x),

        int_{Lambda^c} F(c/|x-y|) |x-y|^-(d+2s-1) dy = sum_k weight * F(c * factor)

    where factor = t/delta is the reciprocal distance of the sample. The same
    samples give the G and Gtilde tails after multiplying by factor and
    factor**2 respectively.
    """
    d = mesh.d
    dirs, wdir = tail_directions(d, cfg)
    delta = mesh.exit_distance(points, dirs)                      # (n, ndir)
    t, wt = gauss_jacobi01(cfg.n_rad, 0.0, 2.0 * s)               # weight t^(2s)
    factor = t[None, None, :] / delta[:, :, None]
    weight = (wdir[None, :, None] * delta[:, :, None] ** (1.0 - 2.0 * s)
              * (wt / t ** 2)[None, None, :])
    n = len(delta)
    return factor.reshape(n, -1), weight.reshape(n, -1)


def farfield_tail(x, c: float, kind: str, mesh, params, config: QuadratureConfig | None = None):
    """Integral over the complement of Lambda of phi(c/|x-y|) |x-y|^(-p) dy.

    ``kind`` selects (phi, p): ``F`` -> (F, d+2s-1), ``G`` -> (G, d+2s),
    ``Gtilde`` -> (Gtilde, d+1+2s). Radial integration uses t = delta/r with
    delta the exit distance of the ray from x through the boundary of
    Lambda.
    """
    cfg = config or QuadratureConfig()
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    if np.linalg.norm(x) >= mesh.R:
        raise DomainError(f"point {x.ravel()} outside the computational ball R={mesh.R}")
    if kind not in TAIL_POWER:
        raise ValueError(f"unknown tail kind {kind!r}")
    fac, w = tail_samples(x, mesh, params.s, cfg)
    fn = getattr(params.closed_form, kind)
    return float(np.sum(w * fn(c * fac) * fac ** TAIL_POWER[kind]))
