"""Energy, residual and matrices of the discrete nonlocal minimal graph problem.

All quantities are double integrals over the interaction domain
Q = (R^d x R^d) minus (Omega^c x Omega^c) of expressions in the difference
quotient d_u(x, y) = (u(x) - u(y)) / |x - y| against |x - y|^-(d+2s-1).
They are split as

* ordered element pairs (T, T') with T in Omega and T' anywhere in the
  meshed ball Lambda; T' outside Omega is counted twice by symmetry,
* a tail over Omega x (complement of Lambda), where u vanishes, again
  counted twice.

Touching pairs use the singularity-removing rules of
:mod:`nlmg.quadrature` (exact in the radial and free variables for these
integrands). Disjoint pairs use tensor Gauss rules: ``n_reg`` points per
dimension when the centroid distance is below ``far_factor`` times the
larger diameter and ``n_far`` beyond.

Every integral is a sum of samples W * phi(d) with nonnegative weights W.
Energy, residual and both matrices are computed from the same samples, so
the residual is the exact gradient of the discrete energy and the frozen
matrix reproduces the residual: A(u) u_I + boundary terms = r(u).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numba
import numpy as np
from scipy import sparse

from .errors import DomainError
from .femspace import DiscreteFunction
from .kernel import KernelParams, fast_scalar, kernel_constants
from .mesh import OMEGA, Mesh, mesh_cache
from .quadrature import (PairClass, QuadratureConfig, compact_rule, gauss_jacobi01,
                         tail_directions, touching_rule)


class Scaling(Enum):
    UNSCALED = "unscaled"
    CDS_SCALED = "cds_scaled"


# operation codes of the sample loops
OP_ENERGY = 0       # sum W F(d_u)
OP_RESIDUAL = 1     # vec_i += W G(d_u) d_phi_i
OP_FROZEN = 2       # matrix with weight Gtilde(d_u)
OP_NEWTON = 3       # matrix with weight F''(d_u)
OP_ES = 4           # sum W (G(d_u) - G(d_v)) (d_u - d_v)
OP_ABS = 5          # sum W |d_v|
OP_FORM = 6         # sum W G(d_u) d_v
OP_MATVEC = 7       # vec_i += W Gtilde(d_u) d_v d_phi_i
OP_EDIFF = 8        # sum W (F(d_u + d_v) - F(d_u)), cancellation-free
OP_FROZEN_ALL = 9   # energy, residual and frozen matrix in one sweep
OP_NEWTON_ALL = 10  # energy, residual and Newton matrix in one sweep
OP_MEASURE = 11     # sum W: integral of the bare kernel

KERNEL_MINIMAL = 0
KERNEL_QUADRATIC = 1   # F = r^2/2: the constant-weight (linear) problem

_CLASS_CODE = {PairClass.IDENTICAL: 0, PairClass.SHARED_EDGE: 1, PairClass.SHARED_VERTEX: 2}


@dataclass(frozen=True)
class AssembledSystem:
    """Dense symmetric system on the interior nodes.

    ``rhs`` carries the fixed exterior values: for the frozen matrix it is
    minus the boundary coupling, for the Newton matrix minus the residual.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    scaling: Scaling
    nodes: np.ndarray

    @property
    def n(self) -> int:
        return self.rhs.size

    def scaled(self, factor: float, scaling: Scaling) -> "AssembledSystem":
        return AssembledSystem(self.matrix * factor, self.rhs * factor, scaling, self.nodes)

    def to_csv(self, path) -> None:
        """Dense matrix dump, one row per line, for debugging."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow([f"n{int(i)}" for i in self.nodes])
            for row in self.matrix:
                w.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# compiled sample loops

@numba.njit(cache=True, inline="always")
def _kfun(kern, mode, r, gt, ft, K, q, tail):
    if kern == KERNEL_QUADRATIC:
        if mode == 0 or mode == 3:
            return 1.0
        if mode == 1:
            return r
        return 0.5 * r * r
    return fast_scalar(r, mode, gt, ft, K, q, tail)


@numba.njit(cache=True, inline="always")
def _fdiff(kern, a, h, gt, ft, K, q, tail):
    """F(a + h) - F(a) without cancellation when h is small."""
    if abs(h) <= 1e-3 * (1.0 + abs(a)):
        return h * (_kfun(kern, 1, a, gt, ft, K, q, tail)
                    + 4.0 * _kfun(kern, 1, a + 0.5 * h, gt, ft, K, q, tail)
                    + _kfun(kern, 1, a + h, gt, ft, K, q, tail)) / 6.0
    return _kfun(kern, 2, a + h, gt, ft, K, q, tail) - _kfun(kern, 2, a, gt, ft, K, q, tail)


@numba.njit(cache=True)
def _accumulate(op, kern, npairs, pnodes, pstart, sidx, SL, du, dv, W, ir, u, gidx,
                gt, ft, K, q, tail, acc, vec, mat, coup, loc):
    """Reduce gathered samples. Pair p owns samples pstart[p]:pstart[p+1];
    sample i uses the signed barycentric row SL[sidx[i]] on pnodes[p]."""
    k = pnodes.shape[1]
    is_mat = op == OP_FROZEN or op == OP_NEWTON or op == OP_FROZEN_ALL or op == OP_NEWTON_ALL
    act = np.empty(k, dtype=np.int64)
    total = 0.0
    for p in range(npairs):
        # only rows of interior nodes end up in the matrix
        nact = 0
        if is_mat:
            for a in range(k):
                if gidx[pnodes[p, a]] >= 0:
                    act[nact] = a
                    nact += 1
        for i in range(pstart[p], pstart[p + 1]):
            L = SL[sidx[i]]
            if op == OP_ENERGY:
                total += W[i] * _kfun(kern, 2, du[i], gt, ft, K, q, tail)
            elif op == OP_RESIDUAL or op == OP_MATVEC:
                if op == OP_RESIDUAL:
                    c = W[i] * _kfun(kern, 1, du[i], gt, ft, K, q, tail) * ir[i]
                else:
                    c = W[i] * _kfun(kern, 0, du[i], gt, ft, K, q, tail) * dv[i] * ir[i]
                for a in range(k):
                    vec[pnodes[p, a]] += c * L[a]
            elif op == OP_FROZEN or op == OP_NEWTON or op == OP_FROZEN_ALL or op == OP_NEWTON_ALL:
                if op == OP_FROZEN_ALL or op == OP_NEWTON_ALL:
                    total += W[i] * _kfun(kern, 2, du[i], gt, ft, K, q, tail)
                    c = W[i] * _kfun(kern, 1, du[i], gt, ft, K, q, tail) * ir[i]
                    for a in range(k):
                        vec[pnodes[p, a]] += c * L[a]
                mode = 0 if (op == OP_FROZEN or op == OP_FROZEN_ALL) else 3
                om = W[i] * _kfun(kern, mode, du[i], gt, ft, K, q, tail)
                om *= ir[i] * ir[i]
                for ja in range(nact):
                    a = act[ja]
                    ca = om * L[a]
                    for b in range(k):
                        loc[a, b] += ca * L[b]
            elif op == OP_ES:
                total += W[i] * (_kfun(kern, 1, du[i], gt, ft, K, q, tail)
                                 - _kfun(kern, 1, dv[i], gt, ft, K, q, tail)) * (du[i] - dv[i])
            elif op == OP_ABS:
                total += W[i] * abs(dv[i])
            elif op == OP_FORM:
                total += W[i] * _kfun(kern, 1, du[i], gt, ft, K, q, tail) * dv[i]
            elif op == OP_EDIFF:
                term = W[i] * _fdiff(kern, du[i], dv[i], gt, ft, K, q, tail)
                total += term
                acc[1] += abs(term)
            elif op == OP_MEASURE:
                total += W[i]
        if is_mat:
            for ja in range(nact):
                a = act[ja]
                ia = gidx[pnodes[p, a]]
                for b in range(k):
                    ib = gidx[pnodes[p, b]]
                    if ib >= 0:
                        mat[ia, ib] += loc[a, b]
                    else:
                        coup[ia] += loc[a, b] * u[pnodes[p, b]]
                    loc[a, b] = 0.0
    acc[0] += total


@numba.njit(cache=True)
def _gather_pair(V, nx, ny, lo, hi, RX, RY, Rw, Rrho, jw, alpha, u, v, need_v,
                 p, pnodes, pstart, sidx, du, dv, W, ir):
    """Append the samples of one element pair; returns the new pair count."""
    m = nx.shape[0]
    d = V.shape[1]
    n = pstart[p]
    for a in range(m):
        pnodes[p, a] = nx[a]
        pnodes[p, m + a] = ny[a]
    for s in range(lo, hi):
        r2 = 0.0
        for j in range(d):
            xj = 0.0
            for a in range(m):
                xj += RX[s, a] * V[nx[a], j] - RY[s, a] * V[ny[a], j]
            r2 += xj * xj
        r = np.sqrt(r2)
        inv = 1.0 / r
        W[n] = jw * Rw[s] * (r / Rrho[s]) ** (-alpha)
        ir[n] = inv
        sidx[n] = s
        acc_u = 0.0
        for a in range(m):
            acc_u += RX[s, a] * u[nx[a]] - RY[s, a] * u[ny[a]]
        du[n] = acc_u * inv
        if need_v:
            acc_v = 0.0
            for a in range(m):
                acc_v += RX[s, a] * v[nx[a]] - RY[s, a] * v[ny[a]]
            dv[n] = acc_v * inv
        n += 1
    pstart[p + 1] = n
    return p + 1


@numba.njit(cache=True)
def _run_all(op, kern, V, S, region, vols, diam, cent, omega_elems, omega_only, use_tail,
             tp_start, tnx, tny, tcls, tjw, Roff,
             RX, RY, Rw, Rrho, SL, near_lo, near_hi, far_lo, far_hi, tail_lo,
             Pn, Un, Vn, wn1, Pf, Uf, Vf, wf1,
             delta, wdir, tr, wtr, s, far_factor, alpha, u, v, gidx,
             gt, ft, K, q, tail, acc, vec, mat, coup):
    m = S.shape[1]
    d = V.shape[1]
    ne = S.shape[0]
    k = 2 * m
    need_v = op == OP_ES or op == OP_ABS or op == OP_FORM or op == OP_MATVEC or op == OP_EDIFF
    # capacity: all pairs of one outer element plus its tail samples
    max_t = 0
    max_tp = 0
    for ii in range(omega_elems.shape[0]):
        cnt = 0
        for p in range(tp_start[ii], tp_start[ii + 1]):
            c = tcls[p]
            cnt += Roff[c + 1] - Roff[c]
        max_t = max(max_t, cnt)
        max_tp = max(max_tp, tp_start[ii + 1] - tp_start[ii])
    n_tail_rows = delta.shape[0] // max(omega_elems.shape[0], 1)
    cap_s = max_t + ne * max(near_hi - near_lo, far_hi - far_lo) \
        + n_tail_rows * wdir.shape[0] * tr.shape[0] + 1
    cap_p = ne + max_tp + 1
    pnodes = np.empty((cap_p, k), dtype=np.int64)
    pstart = np.zeros(cap_p + 1, dtype=np.int64)
    sidx = np.empty(cap_s, dtype=np.int64)
    du = np.empty(cap_s)
    dv = np.empty(cap_s)
    W = np.empty(cap_s)
    ir = np.empty(cap_s)
    loc = np.zeros((k, k))
    for ii in range(omega_elems.shape[0]):
        t = omega_elems[ii]
        p = 0
        pstart[0] = 0
        # touching pairs
        for tp in range(tp_start[ii], tp_start[ii + 1]):
            c = tcls[tp]
            p = _gather_pair(V, tnx[tp], tny[tp], Roff[c], Roff[c + 1], RX, RY, Rw, Rrho,
                             tjw[tp], alpha, u, v, need_v, p, pnodes, pstart, sidx, du, dv, W, ir)
        # disjoint pairs
        for t2 in range(ne):
            in_omega = region[t2] == 1
            if omega_only and not in_omega:
                continue
            dist2 = 0.0
            for j in range(d):
                dist2 += (cent[t, j] - cent[t2, j]) ** 2
            hmax = max(diam[t], diam[t2])
            jw = vols[t] * vols[t2] * (1.0 if in_omega else 2.0)
            if dist2 >= (far_factor * hmax) ** 2:
                P, U, Vv, w1, lo = Pf, Uf, Vf, wf1, far_lo
            else:
                touch = False
                for a in range(m):
                    for b in range(m):
                        if S[t, a] == S[t2, b]:
                            touch = True
                if touch:
                    continue
                P, U, Vv, w1, lo = Pn, Un, Vn, wn1, near_lo
            # tensor rule on precomputed element points and values
            n = pstart[p]
            for a in range(m):
                pnodes[p, a] = S[t, a]
                pnodes[p, m + a] = S[t2, a]
            nq = w1.shape[0]
            for i in range(nq):
                wi = jw * w1[i]
                for j in range(nq):
                    r2 = 0.0
                    for c in range(d):
                        r2 += (P[t, i, c] - P[t2, j, c]) ** 2
                    inv = 1.0 / np.sqrt(r2)
                    W[n] = wi * w1[j] * r2 ** (-0.5 * alpha)
                    ir[n] = inv
                    sidx[n] = lo + i * nq + j
                    du[n] = (U[t, i] - U[t2, j]) * inv
                    if need_v:
                        dv[n] = (Vv[t, i] - Vv[t2, j]) * inv
                    n += 1
            pstart[p + 1] = n
            p += 1
        # tail over the complement of Lambda, y side absent (u = 0 there)
        if use_tail:
            n = pstart[p]
            for a in range(m):
                pnodes[p, a] = S[t, a]
                pnodes[p, m + a] = S[t, a]
            for iq in range(n_tail_rows):
                row = ii * n_tail_rows + iq
                ux = 0.0
                vx = 0.0
                for a in range(m):
                    ux += RX[tail_lo + iq, a] * u[S[t, a]]
                    vx += RX[tail_lo + iq, a] * v[S[t, a]]
                for j in range(wdir.shape[0]):
                    dl = delta[row, j]
                    base = 2.0 * vols[t] * Rw[tail_lo + iq] * wdir[j] * dl ** (1.0 - 2.0 * s)
                    for kk in range(tr.shape[0]):
                        fac = tr[kk] / dl
                        W[n] = base * wtr[kk] / (tr[kk] * tr[kk])
                        ir[n] = fac
                        sidx[n] = tail_lo + iq
                        du[n] = ux * fac
                        dv[n] = vx * fac
                        n += 1
            pstart[p + 1] = n
            p += 1
        _accumulate(op, kern, p, pnodes, pstart, sidx, SL, du, dv, W, ir, u, gidx,
                    gt, ft, K, q, tail, acc, vec, mat, coup, loc)


# ---------------------------------------------------------------------------
# geometry shared by all integrals on a mesh

def touching_pairs(mesh: Mesh, omega_only: bool = False):
    """Ordered touching pairs (T in Omega, T') in canonical vertex order.

    Returns (nx, ny, cls, T, T') with shared vertices first and matched
    positions in both simplices.
    """
    key = ("touching", omega_only)
    cache = mesh_cache(mesh)
    if key in cache:
        return cache[key]
    ne, nv, k = mesh.n_elements, mesh.n_vertices, mesh.d + 1
    B = sparse.csr_matrix((np.ones(ne * k), mesh.simplices.ravel(),
                           np.arange(0, ne * k + 1, k)), shape=(ne, nv))
    om = mesh.omega_elements
    C = (B[om] @ B.T).tocoo()
    t, t2 = om[C.row], C.col
    keep = np.ones(t.size, bool)
    if omega_only:
        keep = mesh.element_region[t2] == OMEGA
    t, t2 = t[keep], t2[keep]
    order = np.lexsort((t2, t))
    t, t2 = t[order], t2[order]
    SX, SY = mesh.simplices[t], mesh.simplices[t2]
    eq = SX[:, :, None] == SY[:, None, :]
    shared_x = eq.any(axis=2)
    ox = np.argsort(~shared_x, axis=1, kind="stable")
    nx = np.take_along_axis(SX, ox, axis=1)
    # position of each y vertex in the reordered x simplex, or k + j if unshared
    pos_in_nx = np.argsort(ox, axis=1)
    match = np.argmax(eq, axis=1)                         # (P, k): x index per y vertex
    has = eq.any(axis=1)
    key_y = np.where(has, np.take_along_axis(pos_in_nx, match, axis=1), k + np.arange(k)[None, :])
    oy = np.argsort(key_y, axis=1, kind="stable")
    ny = np.take_along_axis(SY, oy, axis=1)
    nshared = shared_x.sum(axis=1)
    cls = np.where(nshared == k, 0, np.where(nshared == 1, 2, 1))
    out = (np.ascontiguousarray(nx), np.ascontiguousarray(ny), cls.astype(np.int64), t, t2)
    cache[key] = out
    return out


class Assembler:
    """Integral engine for a fixed mesh, fractional order and quadrature.

    ``kernel='quadratic'`` replaces F by r^2/2, which turns the problem into
    the linear fractional problem of order s + 1/2.
    """

    def __init__(self, mesh: Mesh, params: KernelParams | float,
                 config: QuadratureConfig | None = None, kernel: str = "minimal"):
        if not isinstance(params, KernelParams):
            params = kernel_constants(mesh.d, params)
        if params.d != mesh.d:
            raise DomainError(f"kernel dimension {params.d} differs from mesh dimension {mesh.d}")
        self.mesh = mesh
        self.params = params
        self.config = config or QuadratureConfig()
        if kernel not in ("minimal", "quadratic"):
            raise DomainError(f"unknown kernel {kernel!r}")
        self.kernel = kernel
        self._kern = KERNEL_MINIMAL if kernel == "minimal" else KERNEL_QUADRATIC
        self.alpha = mesh.d + 2.0 * params.s - 1.0
        self.interior = mesh.interior_nodes
        gidx = np.full(mesh.n_vertices, -1, dtype=np.int64)
        gidx[self.interior] = np.arange(self.interior.size)
        self.gidx = gidx
        self._tables = params.fast.tables
        self._tables_by_alpha: dict = {}

    @property
    def n(self) -> int:
        return self.interior.size

    # -- geometry --------------------------------------------------------
    def _tail_geometry(self):
        key = ("tail", self.config.reg_points(self.mesh.d), self.config.theta_points(self.mesh.d))
        cache = mesh_cache(self.mesh)
        if key not in cache:
            mesh, cfg = self.mesh, self.config
            lam, w = compact_rule(mesh.d, cfg.reg_points(mesh.d))
            om = mesh.omega_elements
            pts = np.einsum("qk,ekd->eqd", lam, mesh.element_coords[om]).reshape(-1, mesh.d)
            dirs, wdir = tail_directions(mesh.d, cfg)
            delta = mesh.exit_distance(pts, dirs)
            cache[key] = (np.ascontiguousarray(delta), wdir)
        return cache[key]

    def _element_points(self, n: int, u, v):
        """Quadrature points, values of u and v, and weights on every element."""
        mesh = self.mesh
        lam, w = compact_rule(mesh.d, n)
        P = np.ascontiguousarray(np.einsum("qk,ekd->eqd", lam, mesh.element_coords))
        U = np.ascontiguousarray(u[mesh.simplices] @ lam.T)
        Vv = U if v is u else np.ascontiguousarray(v[mesh.simplices] @ lam.T)
        return P, U, Vv, w

    def _rule_table(self, alpha: float) -> dict:
        """All reference rules stacked into one table of sample rows."""
        key = float(alpha)
        if key in self._tables_by_alpha:
            return self._tables_by_alpha[key]
        d, cfg = self.mesh.d, self.config
        RX, RY, RW, RR = [], [], [], []
        Roff = [0]
        for c in (PairClass.IDENTICAL, PairClass.SHARED_EDGE, PairClass.SHARED_VERTEX):
            if not (d == 1 and c == PairClass.SHARED_EDGE):
                rule = touching_rule(c, d, float(alpha), cfg.n_sing, 1, 1)
                RX.append(rule.lam_x)
                RY.append(rule.lam_y)
                RW.append(rule.weight)
                RR.append(rule.rho)
            Roff.append(sum(len(w) for w in RW))
        spans = {}
        for name, n in (("near", cfg.reg_points(d)), ("far", cfg.far_points(d))):
            lam, w = compact_rule(d, n)
            lo = sum(len(w_) for w_ in RW)
            RX.append(np.repeat(lam, len(w), axis=0))
            RY.append(np.tile(lam, (len(w), 1)))
            RW.append(np.outer(w, w).ravel())
            RR.append(np.ones(len(w) ** 2))
            spans[name] = (lo, lo + len(w) ** 2)
        lam, w = compact_rule(d, cfg.reg_points(d))
        tail_lo = sum(len(w_) for w_ in RW)
        RX.append(lam)
        RY.append(np.zeros_like(lam))
        RW.append(w)
        RR.append(np.ones(len(w)))
        RX = np.ascontiguousarray(np.concatenate(RX))
        RY = np.ascontiguousarray(np.concatenate(RY))
        tab = dict(RX=RX, RY=RY, Rw=np.concatenate(RW), Rrho=np.concatenate(RR),
                   SL=np.ascontiguousarray(np.concatenate([RX, -RY], axis=1)),
                   Roff=np.array(Roff, dtype=np.int64), near=spans["near"], far=spans["far"],
                   tail=tail_lo)
        self._tables_by_alpha[key] = tab
        return tab

    # -- core driver -----------------------------------------------------
    def run(self, op: int, u: np.ndarray, v: np.ndarray | None = None, *,
            omega_only: bool = False, tail: bool = True, alpha: float | None = None,
            kern: int | None = None, acc: np.ndarray | None = None):
        """Run one sample operation over all pair groups; returns
        (scalar, node vector, interior matrix, coupling vector).

        ``acc`` (length 2) receives the raw scalar accumulators if given."""
        mesh, cfg = self.mesh, self.config
        alpha = self.alpha if alpha is None else float(alpha)
        kern = self._kern if kern is None else kern
        u = np.ascontiguousarray(u, dtype=float)
        v = u if v is None else np.ascontiguousarray(v, dtype=float)
        acc = np.zeros(2) if acc is None else acc
        vec = np.zeros(mesh.n_vertices)
        is_mat = op in (OP_FROZEN, OP_NEWTON, OP_FROZEN_ALL, OP_NEWTON_ALL)
        n = self.n if is_mat else 0
        mat = np.zeros((n, n))
        coup = np.zeros(max(n, 1))
        gt, ft, K, q, tl = self._tables
        om = mesh.omega_elements.astype(np.int64)
        nx, ny, cls, t, t2 = touching_pairs(mesh, omega_only)
        mult = np.where(mesh.element_region[t2] == OMEGA, 1.0, 2.0)
        jac = mesh.volumes * (1.0 if mesh.d == 1 else 2.0)
        tjw = jac[t] * jac[t2] * mult
        tp_start = np.searchsorted(t, np.append(om, mesh.n_elements)).astype(np.int64)
        tab = self._rule_table(alpha)
        use_tail = bool(tail and not omega_only)
        if use_tail:
            delta, wdir = self._tail_geometry()
        else:
            delta, wdir = np.ones((0, 1)), np.ones(1)
        tr, wtr = gauss_jacobi01(cfg.n_rad, 0.0, 2.0 * self.params.s)
        _run_all(op, kern, np.ascontiguousarray(mesh.vertices),
                 np.ascontiguousarray(mesh.simplices, dtype=np.int64),
                 np.ascontiguousarray(mesh.element_region, dtype=np.int64),
                 np.ascontiguousarray(mesh.volumes), np.ascontiguousarray(mesh.diameters),
                 np.ascontiguousarray(mesh.centroids), om, omega_only, use_tail,
                 tp_start, nx, ny, cls, tjw, tab["Roff"],
                 tab["RX"], tab["RY"], tab["Rw"], tab["Rrho"], tab["SL"],
                 tab["near"][0], tab["near"][1], tab["far"][0], tab["far"][1], tab["tail"],
                 *self._element_points(cfg.reg_points(mesh.d), u, v), *self._element_points(cfg.far_points(mesh.d), u, v),
                 delta, wdir, tr, wtr, float(self.params.s), float(cfg.far_factor), alpha,
                 u, v, self.gidx, gt, ft, K, q, tl, acc, vec, mat, coup)
        if is_mat:
            mat = 0.5 * (mat + mat.T)
        return float(acc[0]), vec, mat, coup[:n]

    # -- public quantities -------------------------------------------------
    def _values(self, u) -> np.ndarray:
        if isinstance(u, DiscreteFunction):
            if u.mesh is not self.mesh:
                raise DomainError("function lives on a different mesh")
            return u.values
        u = np.asarray(u, dtype=float)
        if u.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} nodal values")
        return u

    def _factor(self, scaling: Scaling) -> float:
        return self.params.Cds if scaling == Scaling.CDS_SCALED else 1.0

    def energy(self, u, scaling: Scaling = Scaling.UNSCALED) -> float:
        return self.run(OP_ENERGY, self._values(u))[0] * self._factor(scaling)

    def energy_change(self, u, w, beta: float = 1.0, with_scale: bool = False):
        """I[u + beta w] - I[u] with w given on all nodes (zero off the interior).

        Each sample contributes W (F(d_b) - F(d_a)) evaluated without
        cancellation, so small changes are resolved far below the size of
        the energy. With ``with_scale`` the sum of absolute contributions is
        returned as well, a yardstick for the rounding error.
        """
        a = self._values(u)
        # the increment is passed itself so that slope changes scale exactly with beta
        acc = np.zeros(2)
        self.run(OP_EDIFF, a, beta * self._values(w), acc=acc)
        return (float(acc[0]), float(acc[1])) if with_scale else float(acc[0])

    def residual(self, u, scaling: Scaling = Scaling.UNSCALED) -> np.ndarray:
        vec = self.run(OP_RESIDUAL, self._values(u))[1]
        return vec[self.interior] * self._factor(scaling)

    def full_residual(self, u) -> np.ndarray:
        """Residual entries for every vertex (exterior entries included)."""
        return self.run(OP_RESIDUAL, self._values(u))[1]

    def frozen_matrix(self, u, scaling: Scaling = Scaling.UNSCALED) -> AssembledSystem:
        _, _, A, coup = self.run(OP_FROZEN, self._values(u))
        f = self._factor(scaling)
        return AssembledSystem(A * f, -coup * f, scaling, self.interior)

    def newton_matrix(self, u, scaling: Scaling = Scaling.UNSCALED) -> AssembledSystem:
        return self.linearize(u, "newton", scaling)[2]

    def linearize(self, u, kind: str = "newton", scaling: Scaling = Scaling.UNSCALED):
        """Energy, interior residual and frozen or Newton system in one sweep.

        The frozen system's rhs is minus the boundary coupling, the Newton
        system's rhs is minus the residual.
        """
        if kind not in ("frozen", "newton"):
            raise ValueError(f"unknown linearization {kind!r}")
        op = OP_FROZEN_ALL if kind == "frozen" else OP_NEWTON_ALL
        E, vec, A, coup = self.run(op, self._values(u))
        f = self._factor(scaling)
        r = vec[self.interior] * f
        rhs = -coup * f if kind == "frozen" else -r
        return E * f, r, AssembledSystem(A * f, rhs, scaling, self.interior)

    def frozen_apply(self, u, v) -> np.ndarray:
        """a_u(v, phi_i) for all vertices i: the frozen operator applied to v."""
        return self.run(OP_MATVEC, self._values(u), self._values(v))[1]

    def form(self, u, v, scaling: Scaling = Scaling.UNSCALED) -> float:
        """a_u(u, v) = integral of G(d_u) d_v."""
        return self.run(OP_FORM, self._values(u), self._values(v))[0] * self._factor(scaling)

    def es_squared(self, u, v) -> float:
        """C_{d,s} times the integral of (G(d_u) - G(d_v)) d_{u-v}."""
        return self.run(OP_ES, self._values(u), self._values(v))[0] * self.params.Cds

    def seminorm(self, v, omega_only: bool = False) -> float:
        """Integral of |v(x)-v(y)| |x-y|^-(d+2s) over Q (or Omega x Omega)."""
        return self.run(OP_ABS, self._values(v), self._values(v), omega_only=omega_only,
                        tail=not omega_only)[0]

    def kernel_mass(self) -> float:
        """Integral of |x-y|^-(d+2s-1) over Omega x Omega."""
        z = np.zeros(self.mesh.n_vertices)
        return self.run(OP_MEASURE, z, omega_only=True, tail=False)[0]

    def gram_matrix(self, alpha: float = 0.0) -> AssembledSystem:
        return gram_matrix(alpha, self.mesh, self.config)


def get_assembler(mesh: Mesh, s: float, config: QuadratureConfig | None = None,
                  kernel: str = "minimal") -> Assembler:
    """Cached :class:`Assembler` per (mesh, s, quadrature, kernel)."""
    config = config or QuadratureConfig()
    key = ("assembler", float(s), config, kernel)
    cache = mesh_cache(mesh)
    if key not in cache:
        cache[key] = Assembler(mesh, kernel_constants(mesh.d, s), config, kernel)
    return cache[key]


# ---------------------------------------------------------------------------
# functional interface

def energy(u: DiscreteFunction, s: float, config: QuadratureConfig | None = None,
           scaling: Scaling = Scaling.UNSCALED) -> float:
    return get_assembler(u.mesh, s, config).energy(u, scaling)


def residual(u: DiscreteFunction, s: float, config: QuadratureConfig | None = None,
             scaling: Scaling = Scaling.UNSCALED) -> np.ndarray:
    return get_assembler(u.mesh, s, config).residual(u, scaling)


def frozen_matrix(u: DiscreteFunction, s: float, config: QuadratureConfig | None = None,
                  scaling: Scaling = Scaling.UNSCALED) -> AssembledSystem:
    return get_assembler(u.mesh, s, config).frozen_matrix(u, scaling)


def newton_matrix(u: DiscreteFunction, s: float, config: QuadratureConfig | None = None,
                  scaling: Scaling = Scaling.UNSCALED) -> AssembledSystem:
    return get_assembler(u.mesh, s, config).newton_matrix(u, scaling)


def mass_matrix(mesh: Mesh) -> np.ndarray:
    """P1 mass matrix on the Omega elements, restricted to interior nodes."""
    k = mesh.d + 1
    local = (np.ones((k, k)) + np.eye(k)) / ((k) * (k + 1))
    om = mesh.omega_elements
    S = mesh.simplices[om]
    vals = mesh.volumes[om][:, None, None] * local[None]
    rows = np.repeat(S, k, axis=1).ravel()
    cols = np.tile(S, (1, k)).ravel()
    M = sparse.coo_matrix((vals.ravel(), (rows, cols)),
                          shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    I = mesh.interior_nodes
    return M[I][:, I].toarray()


def gram_matrix(alpha: float, mesh: Mesh, config: QuadratureConfig | None = None) -> AssembledSystem:
    """Gram matrix of the H^alpha(Omega) inner product on interior basis functions.

    alpha = 0 gives the mass matrix. alpha in (0, 1) (experimental) adds the
    constant-weight form int_{Omega x Omega} (v(x)-v(y))(w(x)-w(y)) / |x-y|^(d+2 alpha).
    """
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"Gram order alpha={alpha} outside [0, 1)")
    M = mass_matrix(mesh)
    if alpha > 0.0:
        # any s works here: the quadratic kernel ignores it
        asm = Assembler(mesh, kernel_constants(mesh.d, 0.25), config, kernel="quadratic")
        _, _, A, _ = asm.run(OP_FROZEN, np.zeros(mesh.n_vertices), omega_only=True, tail=False,
                             alpha=mesh.d + 2.0 * alpha - 2.0)
        M = M + A
    return AssembledSystem(M, np.zeros(M.shape[0]), Scaling.UNSCALED, mesh.interior_nodes)
