"""Simplicial meshes of the computational ball with region tags.

A :class:`Mesh` triangulates Lambda = B_R (an interval in 1d, a disk-like
polygon in 2d). Every element is tagged ``OMEGA`` or ``EXTERIOR`` and every
vertex is ``INTERIOR`` (strictly inside Omega) or ``EXTERIOR`` (on the
boundary of Omega or outside).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import DomainError, MeshValidationError


class Region(IntEnum):
    EXTERIOR = 0
    OMEGA = 1


class NodeClass(IntEnum):
    EXTERIOR = 0
    INTERIOR = 1


OMEGA = Region.OMEGA
INTERIOR = NodeClass.INTERIOR


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh of Lambda.

    Parameters
    ----------
    vertices : (n, d) array
    simplices : (m, d+1) int array, positively oriented in 2d
    element_region : (m,) array of :class:`Region` values
    R : radius of the meshed ball; defaults to the largest vertex norm
    """

    vertices: np.ndarray
    simplices: np.ndarray
    element_region: np.ndarray
    R: float = None
    node_class: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "vertices", _frozen(v, float))
        object.__setattr__(self, "simplices", _frozen(self.simplices, np.int64))
        object.__setattr__(self, "element_region", _frozen(self.element_region, np.int8))
        if self.R is None:
            object.__setattr__(self, "R", float(np.max(np.linalg.norm(v, axis=1))))
        # a vertex is interior iff all elements around it belong to Omega
        touches_ext = np.zeros(len(v), dtype=bool)
        ext = self.simplices[self.element_region != OMEGA]
        touches_ext[ext.ravel()] = True
        used = np.zeros(len(v), dtype=bool)
        used[self.simplices.ravel()] = True
        cls = np.where(used & ~touches_ext, NodeClass.INTERIOR, NodeClass.EXTERIOR)
        object.__setattr__(self, "node_class", _frozen(cls, np.int8))

    # -- basic geometry ---------------------------------------------------
    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.simplices)

    @cached_property
    def element_coords(self) -> np.ndarray:
        """(m, d+1, d) vertex coordinates per element."""
        return self.vertices[self.simplices]

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(m, d, d) columns are edge vectors from the first vertex."""
        X = self.element_coords
        return np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        J = self.jacobians
        fac = 1.0 if self.d == 1 else 0.5
        return fac * np.linalg.det(J)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes)

    @cached_property
    def diameters(self) -> np.ndarray:
        X = self.element_coords
        n = X.shape[1]
        h = np.zeros(len(X))
        for a in range(n):
            for b in range(a + 1, n):
                h = np.maximum(h, np.linalg.norm(X[:, a] - X[:, b], axis=1))
        return h

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.element_coords.mean(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def inradius_diameters(self) -> np.ndarray:
        if self.d == 1:
            return self.diameters.copy()
        X = self.element_coords
        per = sum(np.linalg.norm(X[:, a] - X[:, (a + 1) % 3], axis=1) for a in range(3))
        return 4.0 * self.volumes / per

    @property
    def shape_regularity(self) -> float:
        """sigma = max_T h_T / rho_T with rho_T the inscribed-ball diameter."""
        return float(np.max(self.diameters / self.inradius_diameters))

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(m, d+1, d) gradients of the barycentric coordinates per element."""
        Jinv = np.linalg.inv(self.jacobians)        # rows: gradients of lambda_1..d
        g = np.empty((self.n_elements, self.d + 1, self.d))
        g[:, 1:, :] = Jinv
        g[:, 0, :] = -Jinv.sum(axis=1)
        return g

    # -- classification ---------------------------------------------------
    @cached_property
    def omega_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_region == OMEGA)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_class == INTERIOR)

    @cached_property
    def exterior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_class != INTERIOR)

    @cached_property
    def outer_boundary_nodes(self) -> np.ndarray:
        """Vertices on the boundary of Lambda."""
        if self.d == 1:
            x = self.vertices[:, 0]
            return np.array([int(np.argmin(x)), int(np.argmax(x))])
        return np.unique(self.boundary_segments_idx.ravel())

    @cached_property
    def boundary_segments_idx(self) -> np.ndarray:
        """(k, 2) vertex pairs of the edges on the boundary of Lambda (2d)."""
        edges, counts = _edge_table(self.simplices)
        return edges[counts == 1]

    def exit_distance(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Distance from points ``x`` along unit directions ``theta`` to the
        boundary of the meshed region (assumed convex).

        ``x`` has shape (n, d) and ``theta`` (k, d); the result is (n, k).
        """
        x = np.atleast_2d(x)
        if self.d == 1:
            lo, hi = self.vertices[:, 0].min(), self.vertices[:, 0].max()
            t = theta[:, 0][None, :]
            return np.where(t > 0, hi - x[:, :1], x[:, :1] - lo)
        seg = self.vertices[self.boundary_segments_idx]        # (k, 2, 2)
        P = seg[:, 0]
        E = seg[:, 1] - seg[:, 0]
        # outward normals of a convex polygon; orientation fixed via centroid
        nrm = np.stack([E[:, 1], -E[:, 0]], axis=1)
        c = self.vertices[np.unique(self.boundary_segments_idx)].mean(axis=0)
        flip = np.einsum("ij,ij->i", nrm, P - c) < 0
        nrm[flip] *= -1
        off = np.einsum("ij,ij->i", nrm, P)                      # n.y <= off inside
        ndot = theta @ nrm.T                                     # (k, e)
        slack = off[None, :] - x @ nrm.T                         # (n, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack[:, None, :] / ndot[None, :, :]
        t = np.where(ndot[None, :, :] > 1e-15, t, np.inf)
        return t.min(axis=2)

    # -- point location ---------------------------------------------------
    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.centroids)

    def barycentric(self, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of ``points`` (n, d) in ``elements`` (n,)."""
        X0 = self.element_coords[elements, 0]
        Jinv = np.linalg.inv(self.jacobians[elements])
        lam_rest = np.einsum("nij,nj->ni", Jinv, points - X0)
        return np.concatenate([1.0 - lam_rest.sum(axis=1, keepdims=True), lam_rest], axis=1)

    def locate(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Index of an element containing each point, -1 outside the mesh."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.d:
            pts = pts.reshape(-1, self.d)
        out = np.full(len(pts), -1, dtype=np.int64)
        if self.d == 1:
            order = np.argsort(self.vertices[self.simplices, 0].min(axis=1))
            left = self.vertices[self.simplices[order], 0].min(axis=1)
            right = self.vertices[self.simplices[order], 0].max(axis=1)
            k = np.searchsorted(left, pts[:, 0], side="right") - 1
            k = np.clip(k, 0, len(order) - 1)
            ok = (pts[:, 0] >= left[k] - tol) & (pts[:, 0] <= right[k] + tol)
            out[ok] = order[k[ok]]
            return out
        kq = min(16, self.n_elements)
        _, cand = self._centroid_tree.query(pts, k=kq)
        cand = np.atleast_2d(cand)
        todo = np.arange(len(pts))
        for j in range(kq):
            if todo.size == 0:
                break
            el = cand[todo, j]
            lam = self.barycentric(pts[todo], el)
            hit = lam.min(axis=1) >= -tol
            out[todo[hit]] = el[hit]
            todo = todo[~hit]
        for i in todo:                                   # rare fallback
            lam = self.barycentric(np.repeat(pts[i:i + 1], self.n_elements, 0),
                                   np.arange(self.n_elements))
            hit = np.flatnonzero(lam.min(axis=1) >= -tol)
            if hit.size:
                out[i] = hit[0]
        return out


# ---------------------------------------------------------------------------
# validation

def mesh_cache(mesh: "Mesh") -> dict:
    """Scratch dictionary for derived data that lives as long as the mesh."""
    return mesh.__dict__.setdefault("_nlmg_cache", {})


def _edge_table(simplices):
    edges = np.concatenate([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq, counts


def validate_mesh(mesh: Mesh) -> None:
    """Raise :class:`MeshValidationError` for inverted or non-conforming meshes."""
    vol = mesh.signed_volumes
    bad = np.flatnonzero(vol <= 0)
    if bad.size:
        raise MeshValidationError(f"{bad.size} inverted or degenerate simplices", bad)
    if mesh.d == 1:
        x = mesh.vertices[mesh.simplices, 0]
        order = np.argsort(x[:, 0])
        xs = x[order]
        over = np.flatnonzero(xs[1:, 0] < xs[:-1, 1] - 1e-14)
        if over.size:
            raise MeshValidationError("overlapping intervals", order[over + 1])
        gap = np.flatnonzero(mesh.simplices[order][1:, 0] != mesh.simplices[order][:-1, 1])
        if gap.size:
            raise MeshValidationError("intervals do not share vertices", order[gap + 1])
        return
    edges, counts = _edge_table(mesh.simplices)
    if np.any(counts > 2):
        e = edges[counts > 2]
        offenders = [i for i, t in enumerate(mesh.simplices)
                     if any(set(ed) <= set(t) for ed in map(tuple, e))]
        raise MeshValidationError("edges shared by more than two triangles", offenders)
    # hanging nodes: a vertex strictly inside a boundary edge
    bnd = edges[counts == 1]
    P, Q = mesh.vertices[bnd[:, 0]], mesh.vertices[bnd[:, 1]]
    mid = 0.5 * (P + Q)
    half = 0.5 * np.linalg.norm(Q - P, axis=1)
    tree = cKDTree(mesh.vertices)
    offenders = set()
    for k, idx in enumerate(tree.query_ball_point(mid, half * (1 + 1e-9))):
        for v in idx:
            if v in bnd[k]:
                continue
            w = mesh.vertices[v]
            E = Q[k] - P[k]
            t = np.dot(w - P[k], E) / np.dot(E, E)
            dist = abs(E[0] * (w - P[k])[1] - E[1] * (w - P[k])[0]) / np.linalg.norm(E)
            if 1e-12 < t < 1 - 1e-12 and dist < 1e-10 * np.linalg.norm(E):
                offenders.update(np.flatnonzero((mesh.simplices == bnd[k][0]).any(1)
                                                & (mesh.simplices == bnd[k][1]).any(1)))
    if offenders:
        raise MeshValidationError("hanging nodes on element edges", sorted(offenders))


# ---------------------------------------------------------------------------
# generators

def generate_interval_mesh(a: float, b: float, R: float, n: int) -> Mesh:
    """Uniform mesh of [-R, R] with n elements in Omega = (a, b).

    The exterior pieces use the closest spacing to (b - a)/n that fits.
    """
    if not (-R < a < b < R):
        raise DomainError(f"need -R < a < b < R, got a={a}, b={b}, R={R}")
    if n < 2:
        raise DomainError("need at least two elements in Omega")
    hin = (b - a) / n
    nl = max(1, int(math.ceil((a + R) / hin - 1e-9)))
    nr = max(1, int(math.ceil((R - b) / hin - 1e-9)))
    x = np.concatenate([np.linspace(-R, a, nl + 1)[:-1], np.linspace(a, b, n + 1),
                        np.linspace(b, R, nr + 1)[1:]])
    simp = np.stack([np.arange(len(x) - 1), np.arange(1, len(x))], axis=1)
    region = np.zeros(len(simp), dtype=np.int8)
    region[nl:nl + n] = OMEGA
    return Mesh(x[:, None], simp, region, R=float(R))


def _zip_rings(ia, ta, ib, tb):
    """Triangulate the band between two closed rings.

    ``ia``/``ib`` are vertex indices and ``ta``/``tb`` their angles in [0, 2pi),
    both sorted and starting near angle zero.
    """
    na, nb = len(ia), len(ib)
    ta_ext = np.append(ta, ta[0] + 2 * np.pi)
    tb_ext = np.append(tb, tb[0] + 2 * np.pi)
    tris = []
    i = j = 0
    while i < na or j < nb:
        if j >= nb or (i < na and ta_ext[i + 1] <= tb_ext[j + 1]):
            tris.append((ia[i], ia[(i + 1) % na], ib[j % nb]))
            i += 1
        else:
            tris.append((ia[i % na], ib[(j + 1) % nb], ib[j]))
            j += 1
    return tris


def _ring_mesh(radii, h_e):
    verts = [np.zeros(2)]
    tris = []
    prev_idx = np.array([0])
    prev_t = None
    offset = 1
    for k, r in enumerate(radii):
        n = max(6, int(math.ceil(2 * math.pi * r / h_e)))
        shift = 0.0 if k % 2 == 0 else math.pi / n
        t = shift + 2 * np.pi * np.arange(n) / n
        idx = offset + np.arange(n)
        verts.append(np.stack([r * np.cos(t), r * np.sin(t)], axis=1))
        offset += n
        if prev_t is None:
            tris.extend((0, idx[i], idx[(i + 1) % n]) for i in range(n))
        else:
            tris.extend(_zip_rings(prev_idx, prev_t, idx, t))
        prev_idx, prev_t = idx, t
    return np.vstack(verts), np.array(tris, dtype=np.int64)


def generate_annulus_mesh(r_in: float, r_out: float, R: float, h_target: float) -> Mesh:
    """Triangulate B_R with polygonal circles at ``r_in`` and ``r_out``.

    Vertices are placed on concentric rings; every circle r_in, r_out, R is
    one of the rings, so each triangle lies between two consecutive rings and
    is tagged by the band it belongs to. The ring spacing is reduced until
    the largest element diameter is at most ``h_target``.
    """
    if not (0 < r_in < r_out < R):
        raise DomainError(f"need 0 < r_in < r_out < R, got {r_in}, {r_out}, {R}")
    if h_target > r_in:
        raise DomainError(f"h_target={h_target} too coarse to resolve r_in={r_in}")
    h_e = h_target
    for _ in range(200):
        dr = h_e * math.sqrt(3) / 2
        radii, band = [], []
        for lo, hi, tag in ((0.0, r_in, 0), (r_in, r_out, 1), (r_out, R, 0)):
            m = max(1, int(math.ceil((hi - lo) / dr - 1e-9)))
            radii.extend(lo + (hi - lo) * np.arange(1, m + 1) / m)
            band.extend([tag] * m)
        verts, tris = _ring_mesh(radii, h_e)
        X = verts[tris]
        diam = np.max([np.linalg.norm(X[:, a] - X[:, b], axis=1)
                       for a, b in ((0, 1), (1, 2), (0, 2))], axis=0)
        if diam.max() <= h_target * (1 + 1e-12):
            break
        h_e *= 0.97
    # orientation and region tags
    X = verts[tris]
    det = ((X[:, 1, 0] - X[:, 0, 0]) * (X[:, 2, 1] - X[:, 0, 1])
           - (X[:, 1, 1] - X[:, 0, 1]) * (X[:, 2, 0] - X[:, 0, 0]))
    tris[det < 0] = tris[det < 0][:, [0, 2, 1]]
    # element band: max radius of its vertices identifies the outer ring
    rv = np.linalg.norm(verts, axis=1)
    rmax = rv[tris].max(axis=1)
    rmin = rv[tris].min(axis=1)
    tol = 1e-9
    region = np.where((rmin >= r_in - tol) & (rmax <= r_out + tol), OMEGA, Region.EXTERIOR)
    return Mesh(verts, tris, region.astype(np.int8), R=float(R))


# ---------------------------------------------------------------------------
# patches

@dataclass(frozen=True)
class Stars:
    """Vertex patches and element rings as CSR-style tables."""

    vertex_patch: sp.csr_matrix     # row i lists elements containing vertex i
    ring1: sp.csr_matrix            # row T lists S^1_T
    ring2: sp.csr_matrix            # row T lists S^2_T

    def patch(self, i: int) -> np.ndarray:
        return _row(self.vertex_patch, i)

    def first_ring(self, T: int) -> np.ndarray:
        return _row(self.ring1, T)

    def second_ring(self, T: int) -> np.ndarray:
        return _row(self.ring2, T)


def _row(m, i):
    return m.indices[m.indptr[i]:m.indptr[i + 1]]


def stars(mesh: Mesh) -> Stars:
    m, n = mesh.n_elements, mesh.n_vertices
    rows = np.repeat(np.arange(m), mesh.d + 1)
    inc = sp.csr_matrix((np.ones(rows.size), (rows, mesh.simplices.ravel())), shape=(m, n))
    vp = inc.T.tocsr()
    r1 = (inc @ vp).tocsr()
    r2 = (r1 @ r1).tocsr()
    for a in (vp, r1, r2):
        a.data[:] = 1.0
        a.sort_indices()
    return Stars(vp, r1, r2)


# ---------------------------------------------------------------------------
# file formats

def write_text(mesh: Mesh, path) -> None:
    """Plain text: "nv ne", vertex lines, element lines "i j [k] region"."""
    with open(path, "w", newline="\n") as f:
        f.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        for v in mesh.vertices:
            f.write(" ".join(repr(float(c)) for c in v) + "\n")
        for t, r in zip(mesh.simplices, mesh.element_region):
            f.write(" ".join(str(int(i)) for i in t) + f" {int(r)}\n")


def _read_text(lines):
    nv, ne = (int(t) for t in lines[0].split()[:2])
    V = np.array([[float(c) for c in ln.split()] for ln in lines[1:1 + nv]])
    rows = [[int(c) for c in ln.split()] for ln in lines[1 + nv:1 + nv + ne]]
    d = V.shape[1]
    E = np.array([r[:d + 1] for r in rows], dtype=np.int64)
    reg = np.array([r[d + 1] if len(r) > d + 1 else 0 for r in rows], dtype=np.int8)
    return V, E, reg


def _read_gmsh(lines):
    def block(name):
        start = lines.index(f"${name}")
        end = lines.index(f"$End{name}")
        return lines[start + 1:end]

    fmt = block("MeshFormat")[0].split()
    if not fmt[0].startswith("2"):
        raise MeshValidationError(f"unsupported Gmsh version {fmt[0]}; need 2.2 ASCII")
    nodes = block("Nodes")
    ids, xyz = [], []
    for ln in nodes[1:1 + int(nodes[0])]:
        p = ln.split()
        ids.append(int(p[0]))
        xyz.append([float(c) for c in p[1:4]])
    xyz = np.array(xyz)
    pos = {k: i for i, k in enumerate(ids)}
    elems = block("Elements")
    tri, lin = [], []
    tri_tag, lin_tag = [], []
    for ln in elems[1:1 + int(elems[0])]:
        p = [int(c) for c in ln.split()]
        etype, ntag = p[1], p[2]
        tag = p[3] if ntag > 0 else 0
        conn = [pos[k] for k in p[3 + ntag:]]
        if etype == 2:
            tri.append(conn)
            tri_tag.append(tag)
        elif etype == 1:
            lin.append(conn)
            lin_tag.append(tag)
    if tri:
        V = xyz[:, :2]
        E, tags = np.array(tri, dtype=np.int64), np.array(tri_tag)
    else:
        V = xyz[:, :1]
        E, tags = np.array(lin, dtype=np.int64), np.array(lin_tag)
    used = np.unique(E)
    remap = -np.ones(len(V), dtype=np.int64)
    remap[used] = np.arange(used.size)
    return V[used], remap[E], (tags == 1).astype(np.int8)


def import_mesh(path, region_rule=None) -> Mesh:
    """Read a Gmsh 2.2 ASCII or plain-text mesh and validate it.

    ``region_rule(points) -> bool array`` classifies element centroids as
    Omega. Without a rule the file's region column (text) or physical tag 1
    (Gmsh) marks Omega.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines and lines[0] == "$MeshFormat":
        V, E, reg = _read_gmsh(lines)
    else:
        V, E, reg = _read_text(lines)
    if V.shape[1] == 1:
        # orientation carries no meaning for intervals
        flip = V[E[:, 0], 0] > V[E[:, 1], 0]
        E[flip] = E[flip][:, ::-1]
    if region_rule is not None:
        reg = np.asarray(region_rule(V[E].mean(axis=1)), dtype=bool).astype(np.int8)
    mesh = Mesh(V, E, reg)
    validate_mesh(mesh)
    return mesh


def write_vtk(mesh: Mesh, path, point_data: dict | None = None) -> None:
    """Legacy VTK 3.0 ASCII unstructured grid with optional point scalars."""
    cell_type = 3 if mesh.d == 1 else 5
    with open(path, "w", newline="\n") as f:
        f.write("# vtk DataFile Version 3.0\nnlmg mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices:
            xyz = list(v) + [0.0] * (3 - mesh.d)
            f.write(" ".join(repr(float(c)) for c in xyz) + "\n")
        k = mesh.d + 1
        f.write(f"CELLS {mesh.n_elements} {mesh.n_elements * (k + 1)}\n")
        for t in mesh.simplices:
            f.write(f"{k} " + " ".join(str(int(i)) for i in t) + "\n")
        f.write(f"CELL_TYPES {mesh.n_elements}\n")
        f.write("\n".join([str(cell_type)] * mesh.n_elements) + "\n")
        f.write(f"CELL_DATA {mesh.n_elements}\nSCALARS region int 1\nLOOKUP_TABLE default\n")
        f.write("\n".join(str(int(r)) for r in mesh.element_region) + "\n")
        if point_data:
            f.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, vals in point_data.items():
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                f.write("\n".join(repr(float(x)) for x in vals) + "\n")
