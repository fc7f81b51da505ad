"""Conforming triangulations of polygonal 2D domains.

Triangles are stored counter-clockwise with the *newest vertex* first, so
local edge 0 (opposite local vertex 0) is the refinement edge used by
newest-vertex bisection.  Local edge ``i`` is always the edge opposite local
vertex ``i``.

Facets are oriented globally: an interior facet points from the adjacent
element with the lower index to the one with the higher index, a boundary
facet points outward.  Jumps are ``[b] = b_left - b_right``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY = -1


class InvalidArgumentError(ValueError):
    pass


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


class Mesh:
    """Immutable conforming triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (nV, 2)
    triangles : array_like of int, shape (nT, 3)
        Vertex indices.  Clockwise triangles are stored as given (and then
        reported by :func:`validate_mesh`), unless ``orient=True``.
    regions : array_like of int, optional
        Region tag per element.
    boundary_tags : dict, optional
        Maps sorted vertex pairs ``(i, j)`` to an integer tag.
    parent : array_like of int, optional
        Index of the parent element in the mesh this one was refined from.
    orient : bool
        Reorder clockwise triangles to counter-clockwise.
    """

    def __init__(self, vertices, triangles, regions=None, boundary_tags=None,
                 parent=None, orient=False):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        tri = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if orient:
            area = _signed_areas(self.vertices, tri)
            flip = area < 0
            tri[flip] = tri[flip][:, [0, 2, 1]]
        self.triangles = tri
        nt = len(tri)
        self.regions = (np.zeros(nt, dtype=np.int64) if regions is None
                        else np.array(regions, dtype=np.int64))
        self.parent = None if parent is None else np.array(parent, dtype=np.int64)
        self._build_topology()
        tags = np.ones(self.n_facets, dtype=np.int64)
        tags[~self.boundary_facet_mask] = 0
        if boundary_tags:
            for (a, b), tag in boundary_tags.items():
                f = self._edge_lookup.get((min(a, b), max(a, b)))
                if f is not None:
                    tags[f] = tag
        self.boundary_tags = tags
        _readonly(self.vertices, self.triangles, self.regions, self.boundary_tags)
        if self.parent is not None:
            _readonly(self.parent)

    # -- topology -------------------------------------------------------
    def _build_topology(self):
        tri = self.triangles
        nt = len(tri)
        local = np.array([[1, 2], [2, 0], [0, 1]])
        e = tri[:, local]  # (nT, 3, 2)
        e_sorted = np.sort(e, axis=2).reshape(-1, 2)
        edges, inverse, counts = np.unique(e_sorted, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.ravel()
        self.facets = edges
        self.element_facets = inverse.reshape(nt, 3)
        self.facet_counts = counts
        nf = len(edges)
        owner = np.full((nf, 2), BOUNDARY, dtype=np.int64)
        elem_ids = np.repeat(np.arange(nt), 3)
        order = np.lexsort((elem_ids, inverse))
        f_sorted = inverse[order]
        el_sorted = elem_ids[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = f_sorted[1:] != f_sorted[:-1]
        owner[f_sorted[first], 0] = el_sorted[first]
        second = ~first
        owner[f_sorted[second], 1] = el_sorted[second]
        self.facet_elements = owner
        self.boundary_facet_mask = owner[:, 1] == BOUNDARY
        self.boundary_facets = np.flatnonzero(self.boundary_facet_mask)

        v = self.vertices
        a, b = v[edges[:, 0]], v[edges[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        self.facet_lengths = length
        self.facet_tangents = d / length[:, None]
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        centroids = v[tri].mean(axis=1)
        mid = 0.5 * (a + b)
        ref = np.where(owner[:, 1:2] == BOUNDARY, mid - centroids[owner[:, 0]],
                       centroids[np.maximum(owner[:, 1], 0)] - centroids[owner[:, 0]])
        flip = np.einsum("ij,ij->i", normal, ref) < 0
        normal[flip] *= -1
        self.facet_normals = normal
        # sign of the outward normal of each element w.r.t. the facet normal
        self.element_facet_signs = np.where(
            owner[self.element_facets, 0] == np.arange(nt)[:, None], 1.0, -1.0)
        self.centroids = centroids
        self.areas = _signed_areas(v, tri)
        el = length[self.element_facets]
        self.element_diameters = el.max(axis=1)
        self._edge_lookup = None
        self._edge_lookup = {(int(i), int(j)): f for f, (i, j) in enumerate(edges)} \
            if nf < 200000 else _LazyLookup(edges)
        on_bnd = np.zeros(len(v), dtype=bool)
        on_bnd[edges[self.boundary_facets].ravel()] = True
        self.boundary_vertex_mask = on_bnd
        _readonly(self.facets, self.element_facets, self.facet_elements,
                  self.facet_lengths, self.facet_tangents, self.facet_normals,
                  self.element_facet_signs, self.centroids, self.areas,
                  self.element_diameters, self.boundary_vertex_mask)
        self._v2e = None

    # -- basic counts -----------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def h_max(self):
        return float(self.element_diameters.max())

    def facet_index(self, i, j):
        return self._edge_lookup[(min(i, j), max(i, j))]

    def vertex_elements(self):
        """CSR-style (offsets, elements) incidence of vertices to elements."""
        if self._v2e is None:
            flat = self.triangles.ravel()
            order = np.argsort(flat, kind="stable")
            elems = order // 3
            offsets = np.zeros(self.n_vertices + 1, dtype=np.int64)
            np.add.at(offsets, flat + 1, 1)
            self._v2e = (np.cumsum(offsets), elems)
        return self._v2e

    def element_vertex_coords(self):
        return self.vertices[self.triangles]

    def __repr__(self):
        return (f"Mesh(n_vertices={self.n_vertices}, n_elements={self.n_elements}, "
                f"n_facets={self.n_facets})")


class _LazyLookup:
    def __init__(self, edges):
        self._keys = edges[:, 0] * (edges.max() + 1) + edges[:, 1]
        self._m = edges.max() + 1
        self._order = np.argsort(self._keys)

    def get(self, key, default=None):
        k = key[0] * self._m + key[1]
        pos = np.searchsorted(self._keys, k, sorter=self._order)
        if pos < len(self._keys) and self._keys[self._order[pos]] == k:
            return int(self._order[pos])
        return default

    def __getitem__(self, key):
        out = self.get(key)
        if out is None:
            raise KeyError(key)
        return out


def _signed_areas(v, tri):
    p0, p1, p2 = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


# -- constructors ---------------------------------------------------------

def _square_grid(n, x0=0.0, y0=0.0):
    xs = x0 + np.arange(n + 1) / n
    ys = y0 + np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    a = (j * (n + 1) + i).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    # newest vertex first: refinement edge is the diagonal a-c
    t1 = np.column_stack([b, c, a])
    t2 = np.column_stack([d, a, c])
    tri = np.empty((2 * n * n, 3), dtype=np.int64)
    tri[0::2] = t1
    tri[1::2] = t2
    return verts, tri


def unit_square_mesh(n: int) -> Mesh:
    """Structured mesh of (0,1)^2 with n x n squares, each cut along a diagonal."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"unit_square_mesh needs n >= 1, got {n}")
    verts, tri = _square_grid(int(n))
    return Mesh(verts, tri)


def l_shape_mesh(n: int) -> Mesh:
    """Mesh of (-1,1)^2 minus (0,1)x(-1,0) built from three n x n unit squares."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"l_shape_mesh needs n >= 1, got {n}")
    n = int(n)
    parts = [_square_grid(n, -1.0, 0.0), _square_grid(n, 0.0, 0.0),
             _square_grid(n, -1.0, -1.0)]
    verts = np.vstack([p[0] for p in parts])
    tris, off = [], 0
    regions = []
    for r, (v, t) in enumerate(parts):
        tris.append(t + off)
        regions.append(np.full(len(t), r))
        off += len(v)
    tri = np.vstack(tris)
    # merge duplicated vertices along the shared square edges
    key = np.round(verts * n * 4).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    new_verts = verts[first[order]]
    tri = remap[inv[tri]]
    return Mesh(new_verts, tri, regions=np.concatenate(regions))


# -- refinement -------------------------------------------------------------

def barycentric_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into three by connecting its barycenter.

    The returned mesh carries ``parent`` (child -> macro element) and
    ``children`` (macro element -> its three children).
    """
    nv, nt = mesh.n_vertices, mesh.n_elements
    tri = mesh.triangles
    c = np.arange(nv, nv + nt)
    verts = np.vstack([mesh.vertices, mesh.centroids])
    kids = np.empty((3 * nt, 3), dtype=np.int64)
    kids[0::3] = np.column_stack([c, tri[:, 0], tri[:, 1]])
    kids[1::3] = np.column_stack([c, tri[:, 1], tri[:, 2]])
    kids[2::3] = np.column_stack([c, tri[:, 2], tri[:, 0]])
    parent = np.repeat(np.arange(nt), 3)
    out = Mesh(verts, kids, regions=mesh.regions[parent],
               boundary_tags=_inherited_tags(mesh), parent=parent)
    out.children = np.arange(3 * nt).reshape(nt, 3)
    out.children.setflags(write=False)
    out.macro = mesh
    return out


def _inherited_tags(mesh):
    tags = {}
    for f in mesh.boundary_facets:
        if mesh.boundary_tags[f] != 1:
            a, b = mesh.facets[f]
            tags[(int(a), int(b))] = int(mesh.boundary_tags[f])
    return tags


def refine_marked(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked elements with conforming closure.

    Every marked element is bisected at least once; additional elements are
    bisected to remove hanging nodes.  The output carries ``parent``.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise InvalidArgumentError("marked element index out of range")
    if marked.size == 0:
        return Mesh(mesh.vertices, mesh.triangles, regions=mesh.regions,
                    boundary_tags=_inherited_tags(mesh),
                    parent=np.arange(mesh.n_elements))
    ef = mesh.element_facets
    edge_marked = np.zeros(mesh.n_facets, dtype=bool)
    edge_marked[ef[marked, 0]] = True
    while True:
        bad = edge_marked[ef].any(axis=1) & ~edge_marked[ef[:, 0]]
        if not bad.any():
            break
        edge_marked[ef[bad, 0]] = True
    nv = mesh.n_vertices
    mid = np.full(mesh.n_facets, -1, dtype=np.int64)
    mids = np.flatnonzero(edge_marked)
    mid[mids] = nv + np.arange(len(mids))
    fv = mesh.facets[mids]
    verts = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[fv[:, 0]] + mesh.vertices[fv[:, 1]])])

    tri = mesh.triangles
    split = edge_marked[ef[:, 0]]
    keep = ~split
    out_tri = [tri[keep]]
    out_par = [np.flatnonzero(keep)]

    s = np.flatnonzero(split)
    p0, p1, p2 = tri[s, 0], tri[s, 1], tri[s, 2]
    p4 = mid[ef[s, 0]]
    # child A = (p4, p0, p1) with base = old edge 2; child B = (p4, p2, p0), base = old edge 1
    for child, base_edge in (((p4, p0, p1), ef[s, 2]), ((p4, p2, p0), ef[s, 1])):
        q0, q1, q2 = child
        again = edge_marked[base_edge]
        no = ~again
        out_tri.append(np.column_stack([q0[no], q1[no], q2[no]]))
        out_par.append(s[no])
        m = mid[base_edge[again]]
        a0, a1, a2 = q0[again], q1[again], q2[again]
        out_tri.append(np.column_stack([m, a0, a1]))
        out_par.append(s[again])
        out_tri.append(np.column_stack([m, a2, a0]))
        out_par.append(s[again])
    new_tri = np.vstack(out_tri)
    parent = np.concatenate(out_par)
    order = np.argsort(parent, kind="stable")
    return Mesh(verts, new_tri[order], regions=mesh.regions[parent[order]],
                boundary_tags=_split_tags(mesh, mid), parent=parent[order])


def _split_tags(mesh, mid):
    tags = {}
    for f in mesh.boundary_facets:
        t = int(mesh.boundary_tags[f])
        if t == 1:
            continue
        a, b = (int(x) for x in mesh.facets[f])
        if mid[f] >= 0:
            tags[(a, int(mid[f]))] = t
            tags[(int(mid[f]), b)] = t
        else:
            tags[(a, b)] = t
    return tags


def refine_uniform(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = refine_marked(mesh, np.arange(mesh.n_elements))
    return mesh


# -- vertex patches -----------------------------------------------------------

@dataclass(frozen=True)
class VertexPatch:
    vertex: int
    elements: np.ndarray
    facets: np.ndarray
    is_boundary_vertex: bool
    diameter: float
    boundary_facets: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.elements)


def vertex_patch(mesh: Mesh, v: int) -> VertexPatch:
    """Elements and facets of the patch around vertex ``v``.

    ``facets`` holds every facet of the patch elements, including the ones
    on the patch boundary; ``boundary_facets`` the subset not touching ``v``.
    """
    if v < 0 or v >= mesh.n_vertices:
        raise InvalidArgumentError(f"vertex {v} out of range")
    offsets, elems = mesh.vertex_elements()
    el = np.sort(elems[offsets[v]:offsets[v + 1]])
    facets = np.unique(mesh.element_facets[el].ravel())
    touching = (mesh.facets[facets] == v).any(axis=1)
    pv = mesh.vertices[np.unique(mesh.triangles[el])]
    diff = pv[:, None, :] - pv[None, :, :]
    diam = float(np.sqrt((diff ** 2).sum(-1)).max()) if len(pv) else 0.0
    return VertexPatch(int(v), el, facets, bool(mesh.boundary_vertex_mask[v]), diam,
                       facets[~touching])


# -- validation -------------------------------------------------------------

def validate_mesh(mesh: Mesh, expect_euler: int | None = 1) -> list:
    """Check the mesh invariants; returns a list of violation messages."""
    problems = []
    try:
        v = np.asarray(mesh.vertices)
        tri = np.asarray(mesh.triangles)
        if not np.all(np.isfinite(v)):
            problems.append("non-finite vertex coordinates")
        if tri.size and (tri.min() < 0 or tri.max() >= len(v)):
            problems.append("triangle references a missing vertex")
            return problems
        area = _signed_areas(v, tri)
        bad = np.flatnonzero(area <= 0)
        if bad.size:
            problems.append(f"orientation: {bad.size} triangle(s) not counter-clockwise, "
                            f"first {bad[:5].tolist()}")
        counts = mesh.facet_counts
        if (counts > 2).any():
            problems.append(f"{int((counts > 2).sum())} facet(s) shared by more than two elements")
        nv_used = len(np.unique(tri))
        euler = nv_used - mesh.n_facets + mesh.n_elements
        if expect_euler is not None and euler != expect_euler:
            problems.append(f"Euler characteristic {euler} != {expect_euler}")
        nrm = np.hypot(mesh.facet_normals[:, 0], mesh.facet_normals[:, 1])
        if np.abs(nrm - 1).max() > 1e-12:
            problems.append("facet normal not of unit length")
        owner = mesh.facet_elements
        inner = owner[:, 1] != BOUNDARY
        d = mesh.centroids[owner[inner, 1]] - mesh.centroids[owner[inner, 0]]
        if (np.einsum("ij,ij->i", mesh.facet_normals[inner], d) <= 0).any():
            problems.append("interior facet normal does not point from left to right element")
        if (owner[inner, 0] >= owner[inner, 1]).any():
            problems.append("interior facet left element index not lower than right")
        bf = np.flatnonzero(~inner)
        mid = 0.5 * (v[mesh.facets[bf, 0]] + v[mesh.facets[bf, 1]])
        if (np.einsum("ij,ij->i", mesh.facet_normals[bf], mid - mesh.centroids[owner[bf, 0]]) <= 0).any():
            problems.append("boundary facet normal not outward")
        hanging = _hanging_nodes(v, mesh.facets[bf], np.unique(tri))
        if hanging:
            problems.append(f"{hanging} hanging node(s) on single-sided facets")
    except Exception as exc:  # diagnostics never raise
        problems.append(f"validation aborted: {exc!r}")
    return problems


def _hanging_nodes(v, segs, used, chunk=256):
    pts = v[used]
    count = 0
    for s in range(0, len(segs), chunk):
        a = v[segs[s:s + chunk, 0]][:, None, :]
        b = v[segs[s:s + chunk, 1]][:, None, :]
        d = b - a
        w = pts[None, :, :] - a
        L2 = (d ** 2).sum(-1)
        cross = d[..., 0] * w[..., 1] - d[..., 1] * w[..., 0]
        t = (d * w).sum(-1) / L2
        tol = 1e-10 * np.sqrt(L2)
        on = (np.abs(cross) / np.sqrt(L2) < tol) & (t > 1e-9) & (t < 1 - 1e-9)
        count += int(on.sum())
    return count


# -- text format ------------------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format (0-based indices)."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for f in mesh.boundary_facets:
            a, b = mesh.facets[f]
            fh.write(f"{a} {b} {mesh.boundary_tags[f]}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    nv, nt = int(lines[0][0]), int(lines[0][1])
    verts = np.array([[float(a) for a in ln[:2]] for ln in lines[1:1 + nv]])
    tri = np.array([[int(a) for a in ln[:3]] for ln in lines[1 + nv:1 + nv + nt]], dtype=np.int64)
    tags = {}
    for ln in lines[1 + nv + nt:]:
        a, b, t = int(ln[0]), int(ln[1]), int(ln[2])
        tags[(min(a, b), max(a, b))] = t
    return Mesh(verts, tri, boundary_tags=tags)
