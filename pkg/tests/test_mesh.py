import numpy as np
import pytest
from hypothesis import given, strategies as st

from stokes_eq.mesh import (BOUNDARY, InvalidArgumentError, Mesh, barycentric_refine,
                            l_shape_mesh, read_mesh, refine_marked, refine_uniform,
                            unit_square_mesh, validate_mesh, vertex_patch, write_mesh)


def total_area(mesh):
    return float(mesh.areas.sum())


@pytest.mark.parametrize("n, nv, nt, nf", [(1, 4, 2, 5), (2, 9, 8, 16), (3, 16, 18, 33)])
def test_unit_square_counts(n, nv, nt, nf):
    m = unit_square_mesh(n)
    assert (m.n_vertices, m.n_elements, m.n_facets) == (nv, nt, nf)
    assert m.n_vertices - m.n_facets + m.n_elements == 1
    assert validate_mesh(m) == []


def test_unit_square_coordinates_and_diameter():
    m = unit_square_mesh(4)
    grid = {(i, j) for i in range(5) for j in range(5)}
    got = {(int(round(4 * x)), int(round(4 * y))) for x, y in m.vertices}
    assert got == grid
    np.testing.assert_allclose(4 * m.vertices, np.round(4 * m.vertices), atol=1e-15)
    assert m.h_max == pytest.approx(np.sqrt(2) / 4, abs=1e-15)


@pytest.mark.parametrize("factory", [unit_square_mesh, l_shape_mesh])
def test_constructors_reject_zero(factory):
    with pytest.raises(InvalidArgumentError):
        factory(0)


def test_lshape_small():
    m = l_shape_mesh(1)
    assert (m.n_vertices, m.n_elements, m.n_facets) == (8, 6, 13)
    corner = np.flatnonzero(np.all(np.abs(m.vertices) < 1e-15, axis=1))
    assert corner.size == 1
    assert m.boundary_vertex_mask[corner[0]]
    assert validate_mesh(m) == []


@pytest.mark.parametrize("n", [1, 2, 3])
def test_lshape_area_and_corner(n):
    m = l_shape_mesh(n)
    assert total_area(m) == pytest.approx(3.0, abs=1e-14)
    assert np.any(np.all(np.abs(m.vertices) < 1e-15, axis=1))
    # nothing inside the cut-out quadrant
    assert not np.any((m.centroids[:, 0] > 0) & (m.centroids[:, 1] < 0))


def test_barycentric_refine_square():
    m = unit_square_mesh(1)
    b = barycentric_refine(m)
    assert b.n_elements == 6 and b.n_vertices == 6
    np.testing.assert_array_equal(b.parent, np.repeat([0, 1], 3))
    np.testing.assert_array_equal(b.children, [[0, 1, 2], [3, 4, 5]])
    assert validate_mesh(b) == []


@pytest.mark.parametrize("mesh", [unit_square_mesh(3), l_shape_mesh(2)])
def test_barycentric_refine_partition(mesh):
    b = barycentric_refine(mesh)
    assert b.n_elements == 3 * mesh.n_elements
    assert total_area(b) == pytest.approx(total_area(mesh), rel=1e-13)
    child_area = np.bincount(b.parent, weights=b.areas)
    np.testing.assert_allclose(child_area, mesh.areas, rtol=1e-13)
    assert validate_mesh(b) == []


def test_refine_all_doubles():
    m = unit_square_mesh(2)
    r = refine_marked(m, np.arange(m.n_elements))
    assert r.n_elements >= 2 * m.n_elements
    assert validate_mesh(r) == []


def test_refine_nothing_is_identity():
    m = l_shape_mesh(2)
    r = refine_marked(m, [])
    np.testing.assert_array_equal(r.vertices, m.vertices)
    np.testing.assert_array_equal(r.triangles, m.triangles)


def test_refine_single_element_conforming():
    m = unit_square_mesh(2)
    r = refine_marked(m, [3])
    assert validate_mesh(r) == []
    assert r.n_elements > m.n_elements
    # the marked element no longer exists as a leaf
    assert np.count_nonzero(r.parent == 3) >= 2


def test_refine_rejects_out_of_range():
    with pytest.raises(InvalidArgumentError):
        refine_marked(unit_square_mesh(1), [5])


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=6), st.integers(0, 2))
def test_random_refinement_sequences_stay_valid(seeds, base):
    m = [unit_square_mesh(2), l_shape_mesh(1), barycentric_refine(unit_square_mesh(1))][base]
    a0 = total_area(m)
    for s in seeds:
        rng = np.random.default_rng(s)
        marked = rng.choice(m.n_elements, size=1 + s % 4, replace=False) \
            if m.n_elements > 4 else [0]
        m = refine_marked(m, marked)
        assert validate_mesh(m) == []
        assert total_area(m) == pytest.approx(a0, rel=1e-12)


def test_shape_regularity_bounded_under_nvb():
    m = unit_square_mesh(1)
    ratios = []
    for level in range(10):
        corner = np.flatnonzero(np.linalg.norm(m.centroids, axis=1) == np.linalg.norm(m.centroids, axis=1).min())
        m = refine_marked(m, corner)
        ratios.append((m.element_diameters ** 2 / m.areas).max())
    assert max(ratios) <= 2 * ratios[0] + 1e-12


def test_facet_orientation_convention():
    m = refine_uniform(l_shape_mesh(1), 2)
    inner = m.facet_elements[:, 1] != BOUNDARY
    left, right = m.facet_elements[inner, 0], m.facet_elements[inner, 1]
    assert np.all(left < right)
    # normal recomputed from geometry points from left to right
    d = m.vertices[m.facets[inner, 1]] - m.vertices[m.facets[inner, 0]]
    n = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
    s = np.sign(np.einsum("ij,ij->i", n, m.centroids[right] - m.centroids[left]))
    np.testing.assert_allclose(m.facet_normals[inner], n * s[:, None], atol=1e-14)
    # the right element sees the opposite orientation
    fi = np.flatnonzero(inner)
    for f in fi[:20]:
        r = m.facet_elements[f, 1]
        loc = np.flatnonzero(m.element_facets[r] == f)[0]
        assert m.element_facet_signs[r, loc] == -1.0


def test_vertex_patch_corner_and_center():
    m = unit_square_mesh(1)
    corners = [v for v in range(4) if len(vertex_patch(m, v).elements) == 2]
    assert corners
    m2 = unit_square_mesh(2)
    center = int(np.flatnonzero(np.all(np.abs(m2.vertices - 0.5) < 1e-15, axis=1))[0])
    p = vertex_patch(m2, center)
    brute = [t for t in range(m2.n_elements) if center in m2.triangles[t]]
    np.testing.assert_array_equal(p.elements, brute)
    assert not p.is_boundary_vertex
    mid = int(np.flatnonzero(np.all(np.abs(m2.vertices - [0.5, 0.0]) < 1e-15, axis=1))[0])
    assert vertex_patch(m2, mid).is_boundary_vertex


def test_vertex_patch_rejects_bad_index():
    with pytest.raises(InvalidArgumentError):
        vertex_patch(unit_square_mesh(1), 4)


@pytest.mark.parametrize("mesh", [unit_square_mesh(3), barycentric_refine(l_shape_mesh(2))])
def test_interior_patch_boundary_is_closed_loop(mesh):
    for v in range(mesh.n_vertices):
        p = vertex_patch(mesh, v)
        assert np.all((mesh.triangles[p.elements] == v).any(axis=1))
        if p.is_boundary_vertex:
            continue
        ends = mesh.facets[p.boundary_facets].ravel()
        # every vertex of a closed loop appears exactly twice
        assert np.all(np.bincount(ends)[np.unique(ends)] == 2)
        assert len(p.boundary_facets) == len(p.elements)


def test_validate_detects_clockwise():
    m = unit_square_mesh(2)
    tri = np.array(m.triangles)
    tri[0] = tri[0, [0, 2, 1]]
    bad = Mesh(m.vertices, tri)
    msgs = validate_mesh(bad)
    assert any("orientation" in s for s in msgs)
    fixed = Mesh(m.vertices, tri, orient=True)
    assert validate_mesh(fixed) == []


def test_validate_detects_hanging_node():
    v = [[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]]
    tri = [[0, 1, 4], [1, 3, 4], [0, 4, 2], [1, 3, 2]]
    assert validate_mesh(Mesh(v, tri, orient=True))


def test_mesh_text_roundtrip(tmp_path):
    m = refine_marked(l_shape_mesh(1), [0, 2])
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"{m.n_vertices} {m.n_elements}"
    r = read_mesh(path)
    np.testing.assert_array_equal(r.vertices, m.vertices)
    np.testing.assert_array_equal(r.triangles, m.triangles)
    np.testing.assert_array_equal(r.boundary_tags, m.boundary_tags)


def test_mesh_is_immutable():
    m = unit_square_mesh(1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0
