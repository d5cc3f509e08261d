"""Brute-force reference computations in one dimension.

Everything here avoids the assembly engine: kernel functions come from the
incomplete beta function, double integrals from composite Gauss rules with
geometric grading toward singular lines, and the perimeter of the subgraph
from its decomposition into four iterated integrals.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .assembly import get_assembler
from .errors import DomainError
from .femspace import DatumSpec, DiscreteFunction, exterior_clement
from .mesh import Mesh
from .quadrature import QuadratureConfig


@dataclass(frozen=True)
class BruteForceConfig:
    """Resolution of the brute-force rules.

    grid_n: Gauss points per panel; levels and ratio: geometric grading
    toward singular points; t_points: Gauss points per half of the vertical
    integral in the perimeter; M: vertical truncation height; mc_samples and
    seed: Monte-Carlo estimator.
    """

    grid_n: int = 12
    levels: int = 10
    ratio: float = 0.25
    t_points: int = 24
    M: float = 2.0
    mc_samples: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.grid_n < 2 or self.levels < 1 or self.t_points < 2:
            raise DomainError("grid_n, t_points >= 2 and levels >= 1 required")
        if not 0.0 < self.ratio < 1.0:
            raise DomainError("grading ratio must lie in (0, 1)")
        if self.M <= 0:
            raise DomainError("M must be positive")


# ---------------------------------------------------------------------------
# kernel functions through the incomplete beta function

def _q(s: float) -> float:
    return (2.0 + 2.0 * s) / 2.0            # (d + 1 + 2s)/2 with d = 1


def beta_K(s: float) -> float:
    """int_0^inf (1+r^2)^-q dr = B(1/2, q-1/2)/2."""
    q = _q(s)
    return 0.5 * special.beta(0.5, q - 0.5)


def beta_G(z, s: float) -> np.ndarray:
    """int_0^z (1+r^2)^-q dr via the regularized incomplete beta function."""
    z = np.asarray(z, dtype=float)
    q = _q(s)
    w = z * z / (1.0 + z * z)
    return np.sign(z) * beta_K(s) * special.betainc(0.5, q - 0.5, w)


def beta_G_upper(z, s: float) -> np.ndarray:
    """K - G(z) for z >= 0, computed without cancellation."""
    z = np.asarray(z, dtype=float)
    q = _q(s)
    return beta_K(s) * special.betainc(q - 0.5, 0.5, 1.0 / (1.0 + z * z))


def beta_F(z, s: float) -> np.ndarray:
    """int_0^z G = int_0^z (z - r)(1+r^2)^-q dr."""
    z = np.abs(np.asarray(z, dtype=float))
    q = _q(s)
    out = np.empty_like(z)
    small = z <= 1.0
    x, w = np.polynomial.legendre.leggauss(24)
    t = 0.5 * (x + 1.0)
    zs = z[small][:, None]
    r = zs * t[None, :]
    out[small] = (zs[:, 0] * np.sum(0.5 * w * (zs - r) * (1.0 + r * r) ** (-q), axis=1))
    zb = z[~small]
    out[~small] = zb * beta_G(zb, s) - (1.0 - (1.0 + zb * zb) ** (1.0 - q)) / (2.0 * (q - 1.0))
    return out


# ---------------------------------------------------------------------------
# one-dimensional rules

def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def graded_rule(a: float, b: float, cfg: BruteForceConfig, left: bool = True,
                right: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [a, b] with geometric refinement toward the
    chosen endpoints."""
    if b <= a:
        return np.zeros(0), np.zeros(0)
    t, w = _gauss(cfg.grid_n)
    q = cfg.ratio
    if left and right:
        m = 0.5 * (a + b)
        xl, wl = graded_rule(a, m, cfg, True, False)
        xr, wr = graded_rule(m, b, cfg, False, True)
        return np.concatenate([xl, xr]), np.concatenate([wl, wr])
    L = b - a
    # panels [q^(k+1), q^k] L measured from the graded end, plus the last piece
    edges = np.concatenate([[0.0], L * q ** np.arange(cfg.levels, -1, -1)])
    lo, hi = edges[:-1], edges[1:]
    x = (lo[:, None] + (hi - lo)[:, None] * t[None, :]).ravel()
    ww = ((hi - lo)[:, None] * w[None, :]).ravel()
    if left:
        return a + x, ww
    return b - x[::-1], ww[::-1]


def _tail_rule(rho0: float, s: float, n: int):
    """Nodes rho > rho0 and weights for int_rho0^inf f(rho) d rho when
    f(rho) ~ rho^(-1-2s) smooth in 1/rho (substitution t = rho0/rho)."""
    x, w = special.roots_jacobi(n, 0.0, 2.0 * s - 1.0)      # weight (1+x)^(2s-1)
    t = 0.5 * (x + 1.0)
    w = w * 0.5 ** (2.0 * s)                                 # weight t^(2s-1) on [0, 1]
    rho = rho0 / t
    return rho, w * rho0 / (t * t) / t ** (2.0 * s - 1.0)



# ---------------------------------------------------------------------------
# glued functions

@dataclass
class _Glued:
    """u inside Omega = (a, b), g outside; vectorized with breakpoints."""

    u: Callable
    g: Callable
    a: float
    b: float
    support: float
    kinks: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x > self.a) & (x < self.b)
        out = np.zeros_like(x)
        if inside.any():
            out[inside] = self.u(x[inside])
        if (~inside).any():
            out[~inside] = self.g(x[~inside])
        return out


def _as_callable(f) -> Callable:
    if isinstance(f, DiscreteFunction):
        return lambda x: f(np.asarray(x, dtype=float)[:, None])
    if isinstance(f, DatumSpec):
        return lambda x: f(np.asarray(x, dtype=float)[:, None])
    return lambda x: np.asarray(f(np.asarray(x, dtype=float)), dtype=float)


def _glue(u, g, omega, kinks) -> _Glued:
    a, b = omega
    if g is None:
        g_fun, support = _as_callable(u), None
    else:
        g_fun = _as_callable(g)
        support = g.support_radius if isinstance(g, DatumSpec) else None
    if isinstance(u, DiscreteFunction):
        if support is None:
            support = u.mesh.R
        k = u.mesh.vertices[:, 0]
    else:
        k = np.zeros(0)
    if support is None:
        raise DomainError("support radius of the exterior datum unknown")
    if isinstance(g, DatumSpec) and g.kind == "region_constants":
        for lo, hi, _ in g.regions:
            k = np.concatenate([k, [lo, hi, -lo, -hi]])
    pts = np.concatenate([k, np.asarray(kinks, dtype=float), [a, b, -support, support]])
    pts = np.unique(pts[np.isfinite(pts) & (np.abs(pts) <= support)])
    return _Glued(_as_callable(u), g_fun, a, b, support, pts)


def _jacobi01(n: int, beta: float):
    """Gauss rule for int_0^1 t^beta f(t) dt."""
    x, w = special.roots_jacobi(n, 0.0, beta)
    return 0.5 * (x + 1.0), w * 0.5 ** (beta + 1.0)


def _inner_nodes(x: float, f: _Glued, cfg: BruteForceConfig, s: float):
    """Nodes y in R, weights and distances |x - y| for integrals in y at fixed x.

    Works in rho = |x - y| on each side: panels graded geometrically toward
    rho = 0 (innermost one with the weight rho^-2s), dyadic panels after
    every breakpoint of the glued function, and the part beyond the support
    from the tail rule.
    """
    t, w = _gauss(cfg.grid_n)
    tj, wj = _jacobi01(cfg.grid_n, -2.0 * s)
    ys, ws, rs = [], [], []
    for side in (1.0, -1.0):
        r_edge = f.support - side * x
        rk = side * (f.kinks - x)
        rk = np.unique(np.append(rk[(rk > 1e-13 * f.support) & (rk < r_edge)], r_edge))
        r0 = rk[0]
        # first panel: geometric grading toward rho = 0
        edges = r0 * cfg.ratio ** np.arange(cfg.levels, -1, -1)
        lo, hi = edges[:-1], edges[1:]
        rho = [(lo[:, None] + (hi - lo)[:, None] * t).ravel(), edges[0] * tj]
        wt = [((hi - lo)[:, None] * w).ravel(), wj * edges[0] * tj ** (2.0 * s)]
        # later panels: dyadic in rho so that nearby breakpoints are resolved
        for a, b in zip(rk[:-1], rk[1:]):
            pe = [a]
            while pe[-1] * 2.0 < b:
                pe.append(pe[-1] * 2.0)
            pe = np.append(pe, b)
            lo, hi = pe[:-1], pe[1:]
            rho.append((lo[:, None] + (hi - lo)[:, None] * t).ravel())
            wt.append(((hi - lo)[:, None] * w).ravel())
        rt, wtt = _tail_rule(r_edge, s, cfg.t_points)
        rho.append(rt)
        wt.append(wtt)
        rho = np.concatenate(rho)
        rs.append(rho)
        ys.append(x + side * rho)
        ws.append(np.concatenate(wt))
    return np.concatenate(ys), np.concatenate(ws), np.concatenate(rs)


def _outer_nodes(f: _Glued, cfg: BruteForceConfig):
    br = f.kinks[(f.kinks >= f.a) & (f.kinks <= f.b)]
    br = np.unique(np.concatenate([br, [f.a, f.b]]))
    xs, ws = [], []
    for lo, hi in zip(br[:-1], br[1:]):
        x, w = graded_rule(lo, hi, cfg)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


# ---------------------------------------------------------------------------
# energy

def brute_force_energy_1d(u, g: DatumSpec | None = None, s: float = 0.25,
                          config: BruteForceConfig | None = None,
                          omega: tuple = (-1.0, 1.0), kinks: Sequence[float] = ()) -> float:
    """I_s[u] over Q = R^2 minus (Omega^c)^2 for the function equal to ``u``
    on ``omega`` and to ``g`` elsewhere.

    With ``g=None`` ``u`` itself supplies the exterior values (e.g. a
    DiscreteFunction carrying its exterior datum).
    """
    cfg = config or BruteForceConfig()
    if not 0.0 < s < 0.5:
        raise DomainError(f"s={s} outside (0, 1/2)")
    f = _glue(u, g, omega, kinks)
    X, WX = _outer_nodes(f, cfg)
    total = 0.0
    for x, wx in zip(X, WX):
        Y, WY, r = _inner_nodes(x, f, cfg, s)
        ux = f(np.array([x]))[0]
        uy = f(Y)
        mult = np.where((Y > f.a) & (Y < f.b), 1.0, 2.0)
        vals = beta_F((ux - uy) / r, s) * r ** (-2.0 * s)
        total += wx * float(np.sum(WY * mult * vals))
    return total


def monte_carlo_energy_1d(u, g: DatumSpec | None = None, s: float = 0.25,
                          config: BruteForceConfig | None = None,
                          omega: tuple = (-1.0, 1.0)) -> tuple[float, float]:
    """Monte-Carlo estimate (value, standard error) of the same energy.

    x is uniform on Omega; y = x +- rho with rho drawn from the density
    proportional to rho^-(2s) on (0, L) (the kernel itself), so only
    F(d_u) fluctuates. Pairs with |x - y| > L are left out; L is chosen so
    that y covers the support of the datum.
    """
    cfg = config or BruteForceConfig()
    f = _glue(u, g, omega, ())
    rng = np.random.default_rng(cfg.seed)
    n = cfg.mc_samples
    a, b = f.a, f.b
    L = f.support + max(abs(a), abs(b))
    x = a + (b - a) * rng.random(n)
    e = 1.0 - 2.0 * s
    rho = L * rng.random(n) ** (1.0 / e)
    y = x + np.where(rng.random(n) < 0.5, rho, -rho)
    mult = np.where((y > a) & (y < b), 1.0, 2.0)
    # density of (x, y): 1/(b-a) * e rho^(-2s) / L^e / 2
    dens = e * rho ** (-2.0 * s) / L ** e / 2.0 / (b - a)
    vals = mult * beta_F((f(x) - f(y)) / rho, s) * rho ** (-2.0 * s) / dens
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# perimeter of the subgraph

def _phi(lo, hi, rho, s: float, n: int) -> np.ndarray:
    """int_lo^hi dt int_{-t}^inf dr (r^2 + rho^2)^-q, vectorized.

    Scaling z = t/rho gives rho^(-2s) int (K + G(z)) dz with G the
    incomplete beta integral; the z integral is split at 0 and each part is
    integrated in the variable log(1 + |z|), where the integrand decays
    algebraically.
    """
    s_ = s
    K = beta_K(s_)
    zl = np.asarray(lo, dtype=float) / rho
    zh = np.asarray(hi, dtype=float) / rho
    t, w = _gauss(n)

    def neg_part(z):
        # int_{-z}^0 (K + G) = int_0^z (K - G(w)) dw for z >= 0
        T = np.log1p(z)
        zz = np.expm1(T[..., None] * t)
        return T * np.sum(w * beta_G_upper(zz, s_) * (1.0 + zz), axis=-1)

    def pos_part(z):
        # int_0^z (K + G) = 2 K z - int_0^z (K - G)
        return 2.0 * K * z - neg_part(z)

    def prim(z):
        # antiderivative of K + G vanishing at 0
        z = np.asarray(z, dtype=float)
        return np.where(z >= 0, pos_part(np.abs(z)), -neg_part(np.abs(z)))

    return rho ** (-2.0 * s_) * (prim(zh) - prim(zl))


def brute_force_perimeter_1d(u, g: DatumSpec | None, M: float | None = None,
                             s: float = 0.25, config: BruteForceConfig | None = None,
                             omega: tuple = (-1.0, 1.0), kinks: Sequence[float] = (),
                             parts: bool = False):
    """s-perimeter of the subgraph of the glued function in Omega x (-M, M).

    Computes I1 + II1 over Omega x Omega and I2 + II2 over Omega x Omega^c,
    each an iterated integral in (x, y, t) with the r-integral in closed
    form. ``parts=True`` returns the four terms in a dict as well.
    """
    cfg = config or BruteForceConfig()
    M = cfg.M if M is None else float(M)
    if not 0.0 < s < 0.5:
        raise DomainError(f"s={s} outside (0, 1/2)")
    f = _glue(u, g, omega, kinks)
    X, WX = _outer_nodes(f, cfg)
    sup_u = float(np.abs(f(X)).max())
    probe = np.linspace(-f.support, f.support, 2001)
    sup_g = float(np.abs(f(probe[(probe <= f.a) | (probe >= f.b)])).max(initial=0.0))
    if M < max(sup_u, sup_g):
        raise DomainError(f"M={M} below sup|u|={sup_u:.4g} or sup|g|={sup_g:.4g}")
    n = cfg.t_points
    acc = {"I1": 0.0, "II1": 0.0, "I2": 0.0, "II2": 0.0}
    for x, wx in zip(X, WX):
        Y, WY, r = _inner_nodes(x, f, cfg, s)
        ux = f(np.array([x]))[0]
        uy = f(Y)
        inn = (Y > f.a) & (Y < f.b)
        # Omega x Omega
        ri, uyi, wi = r[inn], uy[inn], WY[inn]
        acc["I1"] += wx * float(np.sum(wi * _phi(-M - uyi, ux - uyi, ri, s, n)))
        acc["II1"] += wx * float(np.sum(wi * _phi(-2.0 * M, -uyi - M, ri, s, n)))
        # Omega x Omega^c
        ro, uyo, wo = r[~inn], uy[~inn], WY[~inn]
        acc["I2"] += wx * float(np.sum(wo * _phi(-M - uyo, ux - uyo, ro, s, n)))
        acc["II2"] += wx * float(np.sum(wo * _phi(-M + uyo, uyo - ux, ro, s, n)))
    total = sum(acc.values())
    return (total, acc) if parts else total


# ---------------------------------------------------------------------------
# finite differences and exhaustive minimization

def fd_gradient(u: DiscreteFunction, s: float, step: float = 1e-5,
                config: QuadratureConfig | None = None) -> np.ndarray:
    """Central differences of the discrete energy in every interior value.

    The differences I[u + h e_i] - I[u - h e_i] are evaluated directly
    (without subtracting two rounded energies).
    """
    if step <= 0:
        raise DomainError("step must be positive")
    asm = get_assembler(u.mesh, s, config)
    out = np.zeros(asm.n)
    for k, i in enumerate(asm.interior):
        e = np.zeros(u.mesh.n_vertices)
        e[i] = 1.0
        up = asm.energy_change(u.values - step * e, e, 2.0 * step)
        out[k] = up / (2.0 * step)
    return out


def exhaustive_minimize_small(mesh: Mesh, g: DatumSpec | None, s: float,
                              config: QuadratureConfig | None = None,
                              xtol: float = 1e-9) -> DiscreteFunction:
    """Global minimizer over at most three interior values by nested
    bounded scalar minimization (golden section with parabolic steps).

    The search box is the range of the exterior values widened by 1, which
    contains the minimizer by the maximum principle.
    """
    base = exterior_clement(g, mesh) if g is not None else DiscreteFunction.zeros(mesh)
    interior = mesh.interior_nodes
    n = interior.size
    if n == 0 or n > 3:
        raise DomainError(f"exhaustive search needs 1 to 3 interior values, got {n}")
    asm = get_assembler(mesh, s, config)
    vals = base.values.copy()
    ext = base.values[mesh.exterior_nodes]
    lo, hi = float(min(ext.min(), 0.0)) - 1.0, float(max(ext.max(), 0.0)) + 1.0
    ref = base.values.copy()

    def energy(x):
        vals[interior[: len(x)]] = x
        return asm.energy_change(ref, vals - ref)

    def solve(prefix):
        k = len(prefix)
        if k == n - 1:
            res = optimize.minimize_scalar(lambda t: energy(prefix + [t]), bounds=(lo, hi),
                                           method="bounded", options={"xatol": xtol})
            return [res.x], res.fun

        def inner(t):
            return solve(prefix + [t])[1]

        res = optimize.minimize_scalar(inner, bounds=(lo, hi), method="bounded",
                                       options={"xatol": xtol})
        rest, val = solve(prefix + [res.x])
        return [res.x] + rest, val

    best, _ = solve([])
    out = base.values.copy()
    out[interior] = best
    return DiscreteFunction(mesh, out)


def write_report(rows: Sequence[dict], path) -> None:
    """Oracle comparison rows as CSV (columns from the first row)."""
    if not rows:
        raise ValueError("nothing to write")
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) if isinstance(r[k], float) else r[k] for k in keys])
