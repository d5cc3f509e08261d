"""Error measures, nonlocal normals, seminorms and the classical annulus reference."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembly import OP_ES, Scaling, get_assembler
from .errors import DomainError
from .femspace import DiscreteFunction, interior_clement, prolongate
from .kernel import kernel_constants
from .mesh import OMEGA, Mesh, _edge_table, mesh_cache
from .quadrature import QuadratureConfig, gauss_jacobi01, gauss_legendre01, simplex_rule

GAMMA_STAR = 0.5 * math.log(2.0 + math.sqrt(3.0))
NORM_QUAD_ORDER = 4
NORMAL_DIRECTIONS = 64      # rays for the 2d nonlocal normal
NORMAL_GAUSS = 12           # Gauss points per ray segment


# ---------------------------------------------------------------------------
# helpers

def _omega_gradients(u: DiscreteFunction) -> tuple[np.ndarray, np.ndarray]:
    om = u.mesh.omega_elements
    return u.element_gradients()[om], u.mesh.volumes[om]


def _on_common_mesh(u: DiscreteFunction, v: DiscreteFunction) -> DiscreteFunction:
    """``v`` represented on the mesh of ``u`` (prolongated if it is coarser)."""
    if v.mesh is u.mesh:
        return v
    fine = prolongate(v, u.mesh)
    # a non-nested pair of meshes shows up as mismatched vertex values
    back = fine(v.mesh.vertices)
    if not np.allclose(back, v.values, atol=1e-10 * (1.0 + np.abs(v.values).max())):
        raise DomainError("meshes are not nested; project onto a common mesh first")
    return fine


def _check_exterior(u: DiscreteFunction, v: DiscreteFunction, tol: float = 1e-10) -> None:
    ext = u.mesh.exterior_nodes
    scale = 1.0 + np.abs(u.values[ext]).max(initial=0.0)
    if not np.allclose(u.values[ext], v.values[ext], atol=tol * scale, rtol=0.0):
        raise DomainError("functions carry different exterior values")


# ---------------------------------------------------------------------------
# geometric error

@dataclass
class GeometricErrorBreakdown:
    """Squared nonlocal geometric error evaluated two ways.

    ``components`` splits the direct value into Omega x Omega, Omega x
    (Lambda minus Omega) (both orders) and the tail beyond Lambda.
    ``e_classical`` is the local counterpart e (not squared).
    """

    es_squared_direct: float
    es_squared_ortho: float | None = None
    e_classical: float | None = None
    components: dict = field(default_factory=dict)

    @property
    def es(self) -> float:
        return math.sqrt(max(self.es_squared_direct, 0.0))

    @property
    def ortho_gap(self) -> float | None:
        """Relative difference of the two evaluations."""
        if self.es_squared_ortho is None:
            return None
        ref = max(abs(self.es_squared_direct), 1e-300)
        return abs(self.es_squared_ortho - self.es_squared_direct) / ref


def geometric_error_es(u: DiscreteFunction, v: DiscreteFunction, s: float,
                       config: QuadratureConfig | None = None,
                       test_function: DiscreteFunction | None = None,
                       orthogonality: bool = True,
                       components: bool = True) -> GeometricErrorBreakdown:
    """e_s(u, v)^2 between a reference ``u`` and a discrete ``v``.

    ``v`` may live on a coarser nested mesh; it is prolongated onto the mesh
    of ``u``. The orthogonality route evaluates
    C int (G(d_u) - G(d_v)) (d_u - d_w) with w = ``test_function`` (a member
    of the discrete space of ``v``; by default the interior Clement
    interpolant of ``u`` on the mesh of ``v`` completed by the exterior
    values of ``v``). It equals the direct value when ``u`` and ``v`` solve
    their discrete problems on nested meshes with common exterior data.
    """
    coarse = v
    v = _on_common_mesh(u, v)
    _check_exterior(u, v)
    asm = get_assembler(u.mesh, s, config)
    Cds = asm.params.Cds
    if components:
        oo = asm.run(OP_ES, u.values, v.values, omega_only=True, tail=False)[0] * Cds
        lam = asm.run(OP_ES, u.values, v.values, tail=False)[0] * Cds
        full = asm.es_squared(u, v)
        parts = {"omega_omega": oo, "omega_exterior": lam - oo, "tail": full - lam}
    else:
        full = asm.es_squared(u, v)
        parts = {}
    ortho = None
    if orthogonality:
        if test_function is None:
            w = interior_clement(u, coarse.mesh)
            w = coarse.with_interior(w.interior_values)
        else:
            w = test_function
        if w.mesh is not coarse.mesh:
            raise DomainError("test function must live on the mesh of the discrete function")
        w = _on_common_mesh(u, w)
        diff = u - w
        ortho = (asm.form(u, diff) - asm.form(v, diff)) * Cds
    return GeometricErrorBreakdown(full, ortho, classical_error_e(u, v), parts)


def geometric_error_bound(u: DiscreteFunction, v_h: DiscreteFunction, s: float,
                          config: QuadratureConfig | None = None) -> float:
    """Upper bound 2 C K |u - v_h|_V for e_s(u, u_h)^2, any v_h in the discrete space."""
    v_h = _on_common_mesh(u, v_h)
    p = kernel_constants(u.mesh.d, s)
    return 2.0 * p.Cds * p.K * nonlocal_seminorm(u - v_h, 2.0 * s, config=config)


# ---------------------------------------------------------------------------
# classical quantities

def _q(a: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + np.sum(a * a, axis=-1))


def _nu_hat(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a, -np.ones(a.shape[:-1] + (1,))], axis=-1) / _q(a)[..., None]


def classical_error_e(u: DiscreteFunction, v: DiscreteFunction, form: str = "normal") -> float:
    """Weighted L2 distance e(u, v) of the graph normals on Omega.

    ``form='normal'`` integrates |nu(grad u) - nu(grad v)|^2 (Q_u + Q_v)/2,
    ``form='inner'`` integrates (nu(grad u) - nu(grad v)) . (grad(u - v), 0);
    both agree up to rounding.
    """
    if v.mesh is not u.mesh:
        raise DomainError("functions live on different meshes; prolongate first")
    gu, vol = _omega_gradients(u)
    gv, _ = _omega_gradients(v)
    dn = _nu_hat(gu) - _nu_hat(gv)
    if form == "normal":
        dens = np.sum(dn * dn, axis=1) * 0.5 * (_q(gu) + _q(gv))
    elif form == "inner":
        dens = np.sum(dn[:, :-1] * (gu - gv), axis=1)
    else:
        raise ValueError(f"unknown form {form!r}")
    return math.sqrt(max(float(np.dot(dens, vol)), 0.0))


def classical_form(u: DiscreteFunction, v: DiscreteFunction) -> float:
    """Integral over Omega of grad u . grad v / Q(grad u)."""
    if v.mesh is not u.mesh:
        raise DomainError("functions live on different meshes; prolongate first")
    gu, vol = _omega_gradients(u)
    gv, _ = _omega_gradients(v)
    return float(np.dot(np.sum(gu * gv, axis=1) / _q(gu), vol))


# ---------------------------------------------------------------------------
# nonlocal normal

def _ray_breaks(mesh: Mesh, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Distances rho > 0 at which the ray y = x - rho theta crosses mesh
    facets, up to (and including) the exit from Lambda."""
    if mesh.d == 1:
        rho = (x[0] - mesh.vertices[:, 0]) * theta[0]
        rho = rho[rho > 1e-14]
    else:
        cache = mesh_cache(mesh)
        if "edges" not in cache:
            cache["edges"] = _edge_table(mesh.simplices)[0]
        E = cache["edges"]
        A = mesh.vertices[E[:, 0]]
        e = mesh.vertices[E[:, 1]] - A
        rx = A - x
        # x - rho theta = A + t e, solved for (rho, t) by Cramer's rule
        det = theta[0] * e[:, 1] - theta[1] * e[:, 0]
        ok = np.abs(det) > 1e-14
        safe = np.where(ok, det, 1.0)
        rho = (rx[:, 1] * e[:, 0] - rx[:, 0] * e[:, 1]) / safe
        t = (theta[1] * rx[:, 0] - theta[0] * rx[:, 1]) / safe
        keep = ok & (t >= -1e-12) & (t <= 1 + 1e-12) & (rho > 1e-12)
        rho = rho[keep]
    delta = float(mesh.exit_distance(x[None, :], -theta[None, :])[0, 0])
    rho = np.unique(np.round(rho[rho < delta], 14))
    return np.append(rho[rho < delta * (1 - 1e-13)], delta)


def nonlocal_normal(u: DiscreteFunction, x, s: float, n_directions: int | None = None,
                    n_gauss: int = NORMAL_GAUSS) -> np.ndarray:
    """Projected nonlocal normal C int G(d_u(x, y)) (x - y) |x - y|^-(d+2s) dy.

    The integral runs over all of R^d in polar coordinates around x: along
    each ray u is piecewise linear, the first segment is integrated exactly
    (d_u is constant there), later segments by Gauss-Legendre, and the part
    beyond Lambda (where u vanishes) by Gauss-Jacobi in t = delta/rho.
    """
    mesh = u.mesh
    d = mesh.d
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(d)
    if mesh.locate(x[None, :])[0] < 0 or mesh.element_region[mesh.locate(x[None, :])[0]] != OMEGA:
        raise DomainError(f"point {x.tolist()} is not in Omega")
    p = kernel_constants(d, s)
    G = p.closed_form.G
    if d == 1:
        dirs, wdir = np.array([[1.0], [-1.0]]), np.ones(2)
    else:
        n = n_directions or NORMAL_DIRECTIONS
        th = (np.arange(n) + 0.5) * 2.0 * np.pi / n
        dirs, wdir = np.stack([np.cos(th), np.sin(th)], axis=1), np.full(n, 2.0 * np.pi / n)
    ux = float(u(x[None, :])[0])
    gx, gw = gauss_legendre01(n_gauss)
    tj, wj = gauss_jacobi01(n_gauss, 0.0, 2.0 * s - 1.0)         # weight t^(2s-1)
    e = 1.0 - 2.0 * s
    out = np.zeros(d)
    for theta, wt in zip(dirs, wdir):
        br = _ray_breaks(mesh, x, theta)
        r1 = br[0]
        # first segment: d_u is the constant slope of u along the ray
        slope = (ux - float(u((x - r1 * theta)[None, :])[0])) / r1
        total = float(G(slope)) * r1 ** e / e
        for a, b in zip(br[:-1], br[1:]):
            r = a + (b - a) * gx
            du = (ux - u(x[None, :] - r[:, None] * theta[None, :])) / r
            total += (b - a) * np.sum(gw * G(du) * r ** (-2.0 * s))
        delta = br[-1]
        # rho in (delta, inf): u = 0, substitute t = delta / rho
        z = ux * tj / delta
        gz = np.where(np.abs(z) > 0, G(z) / np.where(tj > 0, tj, 1.0), 0.0)
        total += delta ** e * np.sum(wj * gz)
        out += wt * total * theta
    return p.Cds * out


def classical_normal(u: DiscreteFunction, x) -> np.ndarray:
    """grad u / sqrt(1 + |grad u|^2) at x from the element containing x."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, u.mesh.d)
    T = u.mesh.locate(x)[0]
    if T < 0:
        raise DomainError("point outside the mesh")
    g = u.element_gradient(T)
    return g / math.sqrt(1.0 + float(g @ g))


# ---------------------------------------------------------------------------
# seminorms and bounds

def nonlocal_seminorm(v: DiscreteFunction, order: float, p: float = 1.0,
                      omega_only: bool = False,
                      config: QuadratureConfig | None = None) -> float:
    """int |v(x) - v(y)|^p |x - y|^-(d + order p) over Q (or Omega x Omega).

    Only p = 1 is available; ``order`` must lie in (0, 1) so that the
    integral is finite for piecewise linear v. The default pairing with the
    energy uses order = 2s.
    """
    if p != 1:
        raise DomainError(f"seminorm exponent p={p} not supported (only p=1)")
    if not 0.0 < order < 1.0:
        raise DomainError(f"order {order} outside (0, 1): integral not finite")
    asm = get_assembler(v.mesh, 0.5 * order, config)
    return asm.seminorm(v, omega_only=omega_only)


def energy_bound_check(u: DiscreteFunction, s: float,
                       config: QuadratureConfig | None = None) -> dict:
    """Check |u|_{W^{2s}_1(Omega)} <= C1 + C2 I_s[u] with C2 = 1/G(1) and
    C1 the integral of |x-y|^(1-d-2s) over Omega x Omega."""
    asm = get_assembler(u.mesh, s, config)
    semi = asm.seminorm(u, omega_only=True)
    C1 = asm.kernel_mass()
    C2 = 1.0 / float(asm.params.closed_form.G(1.0))
    E = asm.energy(u)
    bound = C1 + C2 * E
    return {"seminorm": semi, "C1": C1, "C2": C2, "energy": E, "bound": bound,
            "holds": bool(semi <= bound)}


# ---------------------------------------------------------------------------
# classical annulus reference

@dataclass(frozen=True)
class CatenaryProfile:
    """Radial minimal-surface profile u(r) = lam (acosh(r_out/lam) - acosh(r/lam))."""

    lam: float
    gamma: float
    r_in: float
    r_out: float

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.lam == 0.0:
            return np.zeros_like(r)
        return self.lam * (np.arccosh(self.r_out / self.lam)
                           - np.arccosh(np.maximum(r, self.lam) / self.lam))

    def at_points(self, points) -> np.ndarray:
        """Profile evaluated at |x| for points of shape (n, d)."""
        return self(np.linalg.norm(np.atleast_2d(points), axis=1))


def catenary_reference(gamma: float, r_in: float = 0.5, r_out: float = 1.0,
                       tol: float = 1e-12) -> CatenaryProfile:
    """Classical minimal graph on the annulus with u = gamma at r_in, 0 at r_out.

    Solves lam (acosh(r_out/lam) - acosh(r_in/lam)) = gamma for lam in
    (0, r_in] by bisection; the left side increases from 0 to its value at
    lam = r_in, so there is no graph solution beyond that height.
    """
    if not 0.0 < r_in < r_out:
        raise DomainError(f"need 0 < r_in < r_out, got {r_in}, {r_out}")
    if gamma < 0:
        raise DomainError("gamma must be nonnegative")
    if gamma == 0.0:
        return CatenaryProfile(0.0, 0.0, r_in, r_out)

    def height(lam):
        return lam * (math.acosh(r_out / lam) - math.acosh(r_in / lam))

    top = height(r_in)
    if gamma > top:
        raise DomainError(f"gamma={gamma} exceeds {top:.6g}: no graph solution (sticky regime)")
    lo, hi = 0.0, r_in
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == 0.0 or height(mid) < gamma:
            lo = mid
        else:
            hi = mid
    return CatenaryProfile(0.5 * (lo + hi), gamma, r_in, r_out)


# ---------------------------------------------------------------------------
# norms

def norm_errors(u: DiscreteFunction, reference: Callable | None = None,
                order: int = NORM_QUAD_ORDER) -> dict:
    """L1, L2 and Linf norms of u - reference over Omega.

    ``reference`` maps points (n, d) to values; None means zero. Linf is the
    maximum over quadrature points and vertices of the Omega elements.
    """
    mesh = u.mesh
    om = mesh.omega_elements
    lam, w = simplex_rule(mesh.d, order)
    lam = np.vstack([lam, np.eye(mesh.d + 1)])
    pts = np.einsum("qk,ekd->eqd", lam, mesh.element_coords[om])
    uv = u.values[mesh.simplices[om]] @ lam.T
    ref = 0.0 if reference is None else \
        np.asarray(reference(pts.reshape(-1, mesh.d)), dtype=float).reshape(uv.shape)
    err = np.abs(uv - ref)
    nq = len(w)
    wq = w[None, :] * mesh.volumes[om][:, None]
    return {"L1": float(np.sum(wq * err[:, :nq])),
            "L2": float(math.sqrt(np.sum(wq * err[:, :nq] ** 2))),
            "Linf": float(err.max())}


# ---------------------------------------------------------------------------
# study tables

STUDY_FIELDS = ("quantity", "s", "h", "value", "reference", "gap")


@dataclass
class StudyTable:
    """Rows of (quantity, s, h, value, reference, gap)."""

    rows: list = field(default_factory=list)

    def add(self, quantity: str, s: float, h: float, value: float, reference: float) -> None:
        self.rows.append({"quantity": quantity, "s": float(s), "h": float(h),
                          "value": float(value), "reference": float(reference),
                          "gap": abs(float(value) - float(reference))})

    def column(self, quantity: str, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["quantity"] == quantity])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f, lineterminator="\n")
            wr.writerow(STUDY_FIELDS)
            for r in self.rows:
                wr.writerow([r["quantity"]] + [repr(r[k]) for k in STUDY_FIELDS[1:]])

    def to_dat(self, path) -> None:
        """Whitespace-separated columns with a '#' header (gnuplot layout);
        quantities are separated by two blank lines so each is an index."""
        with open(path, "w") as f:
            f.write("# " + " ".join(STUDY_FIELDS[1:]) + "\n")
            first = True
            for q in dict.fromkeys(r["quantity"] for r in self.rows):
                if not first:
                    f.write("\n\n")
                first = False
                f.write(f"# {q}\n")
                for r in self.rows:
                    if r["quantity"] == q:
                        f.write(" ".join(repr(r[k]) for k in STUDY_FIELDS[1:]) + "\n")


def limit_study(u: DiscreteFunction, v: DiscreteFunction, s_list: Sequence[float],
                config: QuadratureConfig | None = None) -> StudyTable:
    """e_s(u, v) against e(u, v) and C a_u(u, v) against the classical form
    int grad u . grad v / Q(grad u), for every s in ``s_list``."""
    if v.mesh is not u.mesh:
        raise DomainError("functions live on different meshes; prolongate first")
    e_ref = classical_error_e(u, v)
    f_ref = classical_form(u, v)
    h = u.mesh.h
    table = StudyTable()
    for s in s_list:
        asm = get_assembler(u.mesh, s, config)
        es = math.sqrt(max(asm.es_squared(u, v), 0.0))
        form = asm.form(u, v, Scaling.CDS_SCALED)
        table.add("e_s", s, h, es, e_ref)
        table.add("scaled_form", s, h, form, f_ref)
    return table


def normals_study(u: DiscreteFunction, points, s_list: Sequence[float]) -> StudyTable:
    """Distance between the nonlocal normal and grad u / Q(grad u) at points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if u.mesh.d == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
        pts = pts.T
    table = StudyTable()
    for s in s_list:
        for k, x in enumerate(pts):
            nu = nonlocal_normal(u, x, s)
            ref = classical_normal(u, x)
            table.add(f"normal_{k}", s, u.mesh.h, float(np.linalg.norm(nu - ref)), 0.0)
    return table
