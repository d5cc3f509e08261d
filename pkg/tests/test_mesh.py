import math

import numpy as np
import pytest

from nlmg.errors import DomainError, MeshValidationError
from nlmg.mesh import (Mesh, generate_annulus_mesh, generate_interval_mesh, import_mesh,
                       stars, validate_mesh, write_text, write_vtk)


@pytest.fixture(scope="module")
def annulus():
    return generate_annulus_mesh(0.5, 1.0, 2.0, 0.25)


def test_interval_mesh_structure():
    m = generate_interval_mesh(-1.0, 1.0, 2.0, 8)
    assert m.d == 1 and m.R == 2.0
    x = m.vertices[:, 0]
    assert x.min() == -2.0 and x.max() == 2.0
    assert m.h == pytest.approx(0.25)
    om = m.omega_elements
    assert om.size == 8
    assert np.all(np.abs(m.centroids[om, 0]) < 1.0)
    # nodes on the boundary of Omega are exterior
    xi = x[m.interior_nodes]
    assert xi.size == 7 and np.all(np.abs(xi) < 1.0 - 1e-12)
    validate_mesh(m)


def test_interval_mesh_errors():
    with pytest.raises(DomainError):
        generate_interval_mesh(-1.0, 1.0, 1.0, 4)
    with pytest.raises(DomainError):
        generate_interval_mesh(-1.0, 1.0, 2.0, 1)


def test_annulus_mesh_geometry(annulus):
    m = annulus
    assert m.h <= 0.25 * (1 + 1e-12)
    assert np.all(m.volumes > 0)
    # polygonal approximation: the area of Lambda is close to pi R^2
    assert m.volumes.sum() == pytest.approx(math.pi * 4.0, rel=2e-2)
    om = m.omega_elements
    r = np.linalg.norm(m.vertices[m.simplices[om]], axis=2)
    assert r.min() >= 0.5 - 1e-9 and r.max() <= 1.0 + 1e-9
    assert m.volumes[om].sum() == pytest.approx(math.pi * 0.75, rel=3e-2)
    ri = np.linalg.norm(m.vertices[m.interior_nodes], axis=1)
    assert np.all((ri > 0.5 + 1e-9) & (ri < 1.0 - 1e-9))
    assert 1.0 < m.shape_regularity < 10.0
    validate_mesh(m)


def test_annulus_refines(annulus):
    fine = generate_annulus_mesh(0.5, 1.0, 2.0, 0.125)
    assert fine.h <= 0.125 * (1 + 1e-12)
    assert fine.n_elements > 3 * annulus.n_elements


def test_exit_distance(annulus):
    m1 = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    d = m1.exit_distance(np.array([[0.5]]), np.array([[1.0], [-1.0]]))
    assert np.allclose(d, [[1.5, 2.5]])
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    dist = annulus.exit_distance(np.zeros((1, 2)), dirs)
    # inscribed polygon of the circle of radius 2
    n_edges = annulus.boundary_segments_idx.shape[0]
    assert np.all(dist <= 2.0 + 1e-12)
    assert np.all(dist >= 2.0 * math.cos(math.pi / n_edges) - 1e-12)
    # the exit point lies on the meshed boundary
    x0 = np.array([[0.3, -0.7]])
    dd = annulus.exit_distance(x0, dirs)[0]
    pts = x0 + dd[:, None] * dirs
    inside = annulus.locate(pts - 1e-9 * dirs)
    outside = annulus.locate(pts + 1e-9 * dirs)
    assert np.all(inside >= 0) and np.all(outside < 0)


def test_locate_and_barycentric(annulus, rng):
    pts = rng.uniform(-1.4, 1.4, size=(200, 2))
    el = annulus.locate(pts)
    assert np.all(el >= 0)
    lam = annulus.barycentric(pts, el)
    assert np.allclose(lam.sum(axis=1), 1.0)
    assert lam.min() >= -1e-10
    assert np.allclose(np.einsum("nk,nkd->nd", lam, annulus.element_coords[el]), pts)
    assert annulus.locate(np.array([[3.0, 0.0]]))[0] == -1


def test_basis_gradients_reproduce_linears(annulus):
    a = np.array([0.3, -1.2])
    vals = annulus.vertices @ a
    grads = np.einsum("mkd,mk->md", annulus.basis_gradients, vals[annulus.simplices])
    assert np.allclose(grads, a)


def test_stars(annulus):
    st = stars(annulus)
    i = int(annulus.interior_nodes[0])
    patch = st.patch(i)
    assert np.all((annulus.simplices[patch] == i).any(axis=1))
    T = int(patch[0])
    ring = st.first_ring(T)
    assert T in ring
    assert set(ring) <= set(st.second_ring(T))


def test_text_roundtrip(tmp_path, annulus):
    p = tmp_path / "m.txt"
    write_text(annulus, p)
    m2 = import_mesh(p)
    assert np.allclose(m2.vertices, annulus.vertices)
    assert np.array_equal(m2.simplices, annulus.simplices)
    assert np.array_equal(m2.element_region, annulus.element_region)
    assert np.array_equal(m2.interior_nodes, annulus.interior_nodes)


def test_gmsh_import(tmp_path):
    text = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
5
1 -1 -1 0
2 1 -1 0
3 1 1 0
4 -1 1 0
5 0 0 0
$EndNodes
$Elements
4
1 2 2 1 1 1 2 5
2 2 2 2 1 2 3 5
3 2 2 2 1 3 4 5
4 2 2 2 1 4 1 5
$EndElements
"""
    p = tmp_path / "sq.msh"
    p.write_text(text)
    m = import_mesh(p)
    assert m.n_elements == 4 and m.d == 2
    assert m.omega_elements.tolist() == [0]
    m2 = import_mesh(p, region_rule=lambda c: c[:, 1] > 0)
    assert m2.omega_elements.tolist() == [2]


def test_validation_rejects_inverted():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = Mesh(V, np.array([[0, 2, 1]]), np.array([1], dtype=np.int8), R=1.0)
    with pytest.raises(MeshValidationError) as exc:
        validate_mesh(m)
    assert exc.value.offending == [0]


def test_vtk_output(tmp_path, annulus):
    p = tmp_path / "m.vtk"
    write_vtk(annulus, p, {"u": np.arange(annulus.n_vertices, dtype=float)})
    lines = p.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "ASCII" in lines[2] and lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert f"POINT_DATA {annulus.n_vertices}" in lines
    assert "SCALARS u double 1" in lines
    assert b"\r\n" not in p.read_bytes()
