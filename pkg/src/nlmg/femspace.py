"""Continuous piecewise-linear functions, exterior data and Clement operators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .mesh import INTERIOR, OMEGA, Mesh, mesh_cache, write_vtk
from .quadrature import simplex_rule


# ---------------------------------------------------------------------------
# exterior datum

@dataclass(frozen=True)
class DatumSpec:
    """Exterior Dirichlet datum g with compact support.

    ``region_constants``: a tuple of ``(lo, hi, value)`` bands; g equals
    ``value`` where lo <= r <= hi, with r = x in 1d and r = |x| in 2d, and 0
    elsewhere. ``closed_form``: ``func(points) -> values`` for points of
    shape (n, d).
    """

    kind: str
    support_radius: float
    regions: tuple = ()
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("region_constants", "closed_form"):
            raise DomainError(f"unknown datum kind {self.kind!r}")
        if self.kind == "closed_form" and self.func is None:
            raise DomainError("closed_form datum needs a function")

    @classmethod
    def zero(cls) -> "DatumSpec":
        return cls("region_constants", 0.0, ())

    @classmethod
    def constants(cls, bands: Sequence[tuple], support_radius: float | None = None) -> "DatumSpec":
        bands = tuple((float(lo), float(hi), float(v)) for lo, hi, v in bands)
        if support_radius is None:
            support_radius = max([max(abs(lo), abs(hi)) for lo, hi, _ in bands], default=0.0)
        return cls("region_constants", float(support_radius), bands)

    @classmethod
    def annulus(cls, inner_value: float = 0.4, r_in: float = 0.5) -> "DatumSpec":
        """g = inner_value on the closed disk of radius r_in, 0 elsewhere."""
        return cls.constants([(0.0, r_in, inner_value)], support_radius=r_in)

    @classmethod
    def closed_form(cls, func: Callable, support_radius: float) -> "DatumSpec":
        return cls("closed_form", float(support_radius), (), func)

    def _radius(self, points):
        points = np.atleast_2d(points)
        return points[:, 0] if points.shape[1] == 1 else np.linalg.norm(points, axis=1)

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if self.kind == "closed_form":
            return np.asarray(self.func(points), dtype=float)
        r = self._radius(points)
        out = np.zeros(len(points))
        for lo, hi, v in self.regions:
            out[(r >= lo) & (r <= hi)] = v
        return out

    def element_constants(self, mesh: Mesh) -> np.ndarray:
        """Per-element value when g is constant on the element, else NaN."""
        out = np.full(mesh.n_elements, np.nan)
        if self.kind != "region_constants":
            return out
        r = self._radius(mesh.vertices)[mesh.simplices]
        lo_e, hi_e = r.min(axis=1), r.max(axis=1)
        tol = 1e-12
        inside_any = np.zeros(mesh.n_elements, dtype=bool)
        touches = np.zeros(mesh.n_elements, dtype=bool)
        for lo, hi, v in self.regions:
            inside = (lo_e >= lo - tol) & (hi_e <= hi + tol)
            out[inside] = v
            inside_any |= inside
            touches |= (hi_e > lo + tol) & (lo_e < hi - tol)
        out[~inside_any & ~touches] = 0.0
        return out

    @property
    def sup(self) -> float:
        if self.kind == "region_constants":
            return max([abs(v) for _, _, v in self.regions], default=0.0)
        return float("nan")


# ---------------------------------------------------------------------------
# discrete functions

class DiscreteFunction:
    """Continuous piecewise-linear function given by nodal values.

    Evaluation outside the meshed ball returns zero.
    """

    def __init__(self, mesh: Mesh, values):
        values = np.array(values, dtype=float, copy=True)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(f"expected {mesh.n_vertices} nodal values, got {values.shape}")
        values.setflags(write=False)
        self.mesh = mesh
        self.values = values

    def __repr__(self):
        return f"DiscreteFunction(n={self.values.size}, range=[{self.values.min():.4g}, {self.values.max():.4g}])"

    @classmethod
    def zeros(cls, mesh: Mesh) -> "DiscreteFunction":
        return cls(mesh, np.zeros(mesh.n_vertices))

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.mesh.interior_nodes]

    def with_interior(self, interior_values) -> "DiscreteFunction":
        v = self.values.copy()
        v[self.mesh.interior_nodes] = interior_values
        return DiscreteFunction(self.mesh, v)

    def __add__(self, other):
        if isinstance(other, DiscreteFunction):
            _check_same_mesh(self, other)
            return DiscreteFunction(self.mesh, self.values + other.values)
        return DiscreteFunction(self.mesh, self.values + other)

    def __sub__(self, other):
        if isinstance(other, DiscreteFunction):
            _check_same_mesh(self, other)
            return DiscreteFunction(self.mesh, self.values - other.values)
        return DiscreteFunction(self.mesh, self.values - other)

    def __mul__(self, c):
        return DiscreteFunction(self.mesh, self.values * float(c))

    __rmul__ = __mul__

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts[:, None] if self.mesh.d == 1 else pts[None, :]
        out = np.zeros(len(pts))
        el = self.mesh.locate(pts)
        ok = el >= 0
        if ok.any():
            lam = self.mesh.barycentric(pts[ok], el[ok])
            out[ok] = np.einsum("ij,ij->i", lam, self.values[self.mesh.simplices[el[ok]]])
        return out

    def element_gradients(self) -> np.ndarray:
        """(m, d) constant gradient on every element."""
        g = self.mesh.basis_gradients
        return np.einsum("mkd,mk->md", g, self.values[self.mesh.simplices])

    def element_gradient(self, T: int) -> np.ndarray:
        return self.element_gradients()[T]

    # -- export -------------------------------------------------------------
    def to_csv(self, path) -> None:
        d = self.mesh.d
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["node", "x"] + (["y"] if d == 2 else []) + ["value"])
            for i, (p, v) in enumerate(zip(self.mesh.vertices, self.values)):
                w.writerow([i] + [repr(float(c)) for c in p] + [repr(float(v))])

    def to_vtk(self, path, name: str = "u") -> None:
        write_vtk(self.mesh, path, {name: self.values})


def evaluate(u: DiscreteFunction, x) -> np.ndarray:
    return u(x)


def element_gradient(u: DiscreteFunction, T: int) -> np.ndarray:
    return u.element_gradient(T)


def _check_same_mesh(u, v):
    if u.mesh is not v.mesh:
        raise DomainError("functions live on different meshes; prolongate first")


def prolongate(u: DiscreteFunction, fine: Mesh) -> DiscreteFunction:
    """Represent ``u`` on a finer nested mesh by evaluation at its vertices."""
    return DiscreteFunction(fine, u(fine.vertices))


# ---------------------------------------------------------------------------
# Clement operators

QUAD_ORDER = 4      # Gauss points per dimension for local projections


def _local_projection(mesh: Mesh, nodes: np.ndarray, elem_mask: np.ndarray, func,
                      const: np.ndarray | None = None) -> np.ndarray:
    """Value at x_i of the L2 projection onto linears over the patch
    elements of node i selected by ``elem_mask``."""
    d = mesh.d
    vp = mesh_vertex_patches(mesh)
    rows, elems = [], []
    for i in nodes:
        el = vp[i]
        el = el[elem_mask[el]]
        if el.size == 0:
            raise DomainError(f"node {i} has an empty projection patch")
        rows.append(np.full(el.size, i))
        elems.append(el)
    if not rows:
        return np.zeros(0)
    rows = np.concatenate(rows)
    elems = np.concatenate(elems)
    slot = np.searchsorted(nodes, rows)
    lam, w = simplex_rule(d, QUAD_ORDER)
    pts = np.einsum("qk,ekd->eqd", lam, mesh.element_coords[elems])       # (E, nq, d)
    xi = mesh.vertices[rows]
    # one length scale per node so the monomials are global linears on the patch
    node_scale = np.zeros(len(nodes))
    np.maximum.at(node_scale, slot, mesh.diameters[elems])
    scale = node_scale[slot][:, None, None]
    mono = np.concatenate([np.ones(pts.shape[:2] + (1,)), (pts - xi[:, None, :]) / scale], axis=2)
    wq = w[None, :] * mesh.volumes[elems][:, None]                       # (E, nq)
    if const is not None and np.all(np.isfinite(const[elems])):
        gv = np.broadcast_to(const[elems][:, None], wq.shape)
    else:
        gv = np.asarray(func(pts.reshape(-1, d)), dtype=float).reshape(wq.shape)
        if const is not None:
            ok = np.isfinite(const[elems])
            gv = np.where(ok[:, None], const[elems][:, None], gv)
    n = len(nodes)
    M = np.zeros((n, d + 1, d + 1))
    b = np.zeros((n, d + 1))
    np.add.at(M, slot, np.einsum("eq,eqa,eqb->eab", wq, mono, mono))
    np.add.at(b, slot, np.einsum("eq,eq,eqa->ea", wq, gv, mono))
    cond = np.linalg.cond(M)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > 1e12))
    if bad.size:
        raise DomainError(f"degenerate projection patch at nodes {nodes[bad][:10].tolist()}")
    return np.linalg.solve(M, b[..., None])[:, 0, 0]


def mesh_vertex_patches(mesh: Mesh):
    """Elements around each vertex."""
    cache = mesh_cache(mesh)
    if "patches" in cache:
        return cache["patches"]
    order = np.argsort(mesh.simplices.ravel(), kind="stable")
    verts = mesh.simplices.ravel()[order]
    elems = order // (mesh.d + 1)
    bounds = np.searchsorted(verts, np.arange(mesh.n_vertices + 1))
    patches = [elems[bounds[i]:bounds[i + 1]] for i in range(mesh.n_vertices)]
    cache["patches"] = patches
    return patches


def exterior_clement(g: DatumSpec, mesh: Mesh) -> DiscreteFunction:
    """Pi_h^c g: local L2 projections over the exterior part of each patch.

    Nodes on the boundary of Lambda get the value 0 (g vanishes there).
    """
    if g.support_radius > mesh.R + 1e-12:
        raise DomainError(f"datum support radius {g.support_radius} exceeds R={mesh.R}")
    vals = np.zeros(mesh.n_vertices)
    nodes = np.setdiff1d(mesh.exterior_nodes, mesh.outer_boundary_nodes)
    nodes = nodes[np.isin(nodes, np.unique(mesh.simplices))]
    const = g.element_constants(mesh)
    ext_mask = mesh.element_region != OMEGA
    # fast path: every exterior patch element carries the same constant
    vp = mesh_vertex_patches(mesh)
    slow = []
    for i in nodes:
        el = vp[i][ext_mask[vp[i]]]
        c = const[el]
        if np.all(np.isfinite(c)) and np.all(c == c[0]):
            vals[i] = c[0]
        else:
            slow.append(i)
    if slow:
        slow = np.array(slow)
        vals[slow] = _local_projection(mesh, slow, ext_mask, g, const)
    return DiscreteFunction(mesh, vals)


def interior_clement(v, mesh: Mesh) -> DiscreteFunction:
    """Pi_h^o v: local L2 projections of v over full patches of interior nodes."""
    vals = np.zeros(mesh.n_vertices)
    nodes = mesh.interior_nodes
    if nodes.size:
        f = v if callable(v) else (lambda p: np.zeros(len(p)))
        vals[nodes] = _local_projection(mesh, nodes, mesh.element_region == OMEGA, f)
    return DiscreteFunction(mesh, vals)


def quasi_interpolant(v, g: DatumSpec, mesh: Mesh) -> DiscreteFunction:
    """I_h v = Pi_h^o(v restricted to Omega) + Pi_h^c g."""
    return interior_clement(v, mesh) + exterior_clement(g, mesh)


def initial_guess(g: DatumSpec, mesh: Mesh) -> DiscreteFunction:
    """Pi_h^c g with zero interior values."""
    return exterior_clement(g, mesh)
