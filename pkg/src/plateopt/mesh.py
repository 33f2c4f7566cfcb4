"""Conforming triangulations of the unit square: uniform families, red
refinement with transfer data, and a plain-text import format."""

import warnings

import numpy as np

__all__ = ["Mesh", "Prolongation", "MeshFormatError", "MeshTopologyError",
           "build_uniform", "refine", "load_mesh", "save_mesh"]


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class MeshTopologyError(ValueError):
    """Raised when mesh connectivity or geometry is invalid."""


class Mesh:
    """Conforming triangle mesh of the unit square.

    Attributes
    ----------
    vertices : (V, 2) float array of coordinates.
    triangles : (T, 3) int array of vertex indices, counterclockwise.
    edges : (E, 2) int array; each edge stored (lo, hi) with lo < hi, which
        fixes the global orientation (and thereby the edge normal).
    tri_edges : (T, 3) int; edge opposite local vertex j of each triangle.
    tri_edge_sign : (T, 3) float; +1 if the triangle traverses the edge in
        its global direction, -1 otherwise.
    edge_tris : (E, 2) int; adjacent triangles, -1 if boundary.
    boundary_edge, boundary_vertex : boolean masks.
    level : int or None; refinement level k for the uniform family.
    h : longest edge length.

    Instances are immutable after construction; arrays are write-protected.
    """

    def __init__(self, vertices, triangles, level=None):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshTopologyError("vertex array must have shape (V, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshTopologyError("triangle array must have shape (T, 3)")
        if triangles.size and (triangles.min() < 0
                               or triangles.max() >= len(vertices)):
            raise MeshTopologyError("triangle refers to a nonexistent vertex")

        self.vertices = vertices
        self.triangles = triangles
        self.level = level

        p0 = vertices[triangles[:, 0]]
        p1 = vertices[triangles[:, 1]]
        p2 = vertices[triangles[:, 2]]
        signed = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
        bad = np.nonzero(signed <= 0)[0]
        if bad.size:
            raise MeshTopologyError(
                f"triangle {bad[0]} has non-positive area {signed[bad[0]]:.3e}"
                " (vertices must be listed counterclockwise)")
        self.areas = signed
        self.centroids = (p0 + p1 + p2) / 3.0

        self._build_edges()

        lengths = np.linalg.norm(
            self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]],
            axis=1)
        self.edge_lengths = lengths
        tangents = (self.vertices[self.edges[:, 1]]
                    - self.vertices[self.edges[:, 0]]) / lengths[:, None]
        # global edge normal: tangent rotated by -90 degrees
        self.edge_normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        self.h = float(lengths.max())

        total = self.areas.sum()
        if abs(total - 1.0) > 1e-9:
            raise MeshTopologyError(
                f"triangle areas sum to {total!r}, expected the unit square")

        unused = np.setdiff1d(np.arange(len(vertices)),
                              np.unique(triangles))
        if unused.size:
            warnings.warn(f"mesh has {unused.size} vertex(es) not used by any "
                          f"triangle (first: {unused[0]})", stacklevel=2)

        for a in (self.vertices, self.triangles, self.edges, self.tri_edges,
                  self.tri_edge_sign, self.edge_tris, self.boundary_edge,
                  self.boundary_vertex, self.areas, self.centroids,
                  self.edge_lengths, self.edge_normals):
            a.setflags(write=False)

    def _build_edges(self):
        tri = self.triangles
        T = len(tri)
        # local edge j is opposite local vertex j: (j+1, j+2) mod 3
        a = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
        b = np.concatenate([tri[:, 2], tri[:, 0], tri[:, 1]])
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * len(self.vertices) + hi
        uniq, first_idx, inv, counts = np.unique(
            keys, return_index=True, return_inverse=True, return_counts=True)
        if counts.max(initial=0) > 2:
            e = np.nonzero(counts > 2)[0][0]
            raise MeshTopologyError(
                f"edge ({lo[first_idx[e]]}, {hi[first_idx[e]]}) is shared by "
                f"{counts[e]} triangles; mesh is not conforming")
        E = len(uniq)
        self.edges = np.column_stack([lo[first_idx], hi[first_idx]])
        self.tri_edges = inv.reshape(3, T).T.copy()
        self.tri_edge_sign = np.where(a < b, 1.0, -1.0).reshape(3, T).T.copy()

        edge_tris = np.full((E, 2), -1, dtype=np.int64)
        tri_ids = np.tile(np.arange(T), 3)
        order = np.argsort(inv, kind="stable")
        sorted_edges = inv[order]
        sorted_tris = tri_ids[order]
        starts = np.searchsorted(sorted_edges, np.arange(E))
        edge_tris[:, 0] = sorted_tris[starts]
        second = counts == 2
        edge_tris[second, 1] = sorted_tris[starts[second] + 1]
        self.edge_tris = edge_tris
        self.boundary_edge = counts == 1

        bverts = np.zeros(len(self.vertices), dtype=bool)
        bverts[self.edges[self.boundary_edge].ravel()] = True
        self.boundary_vertex = bverts

        used = len(np.unique(self.triangles))
        euler = used - E + T
        if euler != 1:
            raise MeshTopologyError(
                f"Euler relation V - E + T = {euler}, expected 1")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def interior_vertices(self):
        """Indices of vertices not on the boundary."""
        return np.nonzero(~self.boundary_vertex)[0]

    def __repr__(self):
        lvl = "" if self.level is None else f", level={self.level}"
        return (f"Mesh(V={self.num_vertices}, E={self.num_edges}, "
                f"T={self.num_triangles}, h={self.h:.5e}{lvl})")


class Prolongation:
    """Transfer data from a mesh to its red refinement.

    Attributes
    ----------
    coarse, fine : the two meshes.
    parent : (T_fine,) int; coarse triangle containing each fine triangle.
    vertex_tri : (V_fine,) int; a coarse triangle containing each fine vertex.
    vertex_bary : (V_fine, 3) float; barycentric coordinates of each fine
        vertex within `vertex_tri`.
    """

    def __init__(self, coarse, fine, parent, vertex_tri, vertex_bary):
        self.coarse = coarse
        self.fine = fine
        self.parent = parent
        self.vertex_tri = vertex_tri
        self.vertex_bary = vertex_bary
        for a in (parent, vertex_tri, vertex_bary):
            a.setflags(write=False)

    def check_containment(self, tol=1e-12):
        """Verify each fine triangle's centroid lies in its parent."""
        c = self.fine.centroids
        bary = barycentric_coordinates(self.coarse, self.parent, c)
        return bool((bary.min(axis=1) > -tol).all())


def barycentric_coordinates(mesh, tris, xy):
    """Barycentric coordinates of points `xy` w.r.t. triangles `tris`."""
    corners = mesh.vertices[mesh.triangles[tris]]       # (K, 3, 2)
    v0 = corners[:, 1] - corners[:, 0]
    v1 = corners[:, 2] - corners[:, 0]
    d = xy - corners[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (d[:, 0] * v1[:, 1] - d[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * d[:, 1] - v0[:, 1] * d[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def build_uniform(level):
    """Uniform triangulation of the unit square at refinement level k >= 1.

    The square is divided into n x n cells, n = 2**(k-1), each split along
    the lower-left to upper-right diagonal, giving h = sqrt(2)/n.
    """
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    n = 2 ** (level - 1)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):          # row (y direction)
        for j in range(n):      # column (x direction)
            sw, se = vid(i, j), vid(i, j + 1)
            nw, ne = vid(i + 1, j), vid(i + 1, j + 1)
            tris.append((sw, se, ne))   # below the diagonal sw -> ne
            tris.append((sw, ne, nw))   # above it
    return Mesh(vertices, np.array(tris), level=level)


def refine(mesh):
    """Red refinement: split every triangle into 4 congruent children.

    Returns the refined mesh (h halved, level incremented when set) and the
    Prolongation describing parents and vertex embeddings.
    """
    V, E, T = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                 + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])

    tri = mesh.triangles
    # midpoint vertex on the edge opposite local vertex j
    m = V + mesh.tri_edges                                  # (T, 3)
    children = np.empty((4 * T, 3), dtype=np.int64)
    children[0::4] = np.column_stack([tri[:, 0], m[:, 2], m[:, 1]])
    children[1::4] = np.column_stack([tri[:, 1], m[:, 0], m[:, 2]])
    children[2::4] = np.column_stack([tri[:, 2], m[:, 1], m[:, 0]])
    children[3::4] = m
    level = None if mesh.level is None else mesh.level + 1
    fine = Mesh(vertices, children, level=level)

    parent = np.repeat(np.arange(T), 4)

    vertex_tri = np.empty(len(vertices), dtype=np.int64)
    vertex_bary = np.zeros((len(vertices), 3))
    # original vertices: corner of the first triangle listing them
    first_tri = np.full(V, -1, dtype=np.int64)
    first_loc = np.zeros(V, dtype=np.int64)
    for loc in (2, 1, 0):
        first_tri[tri[:, loc]] = np.arange(T)
        first_loc[tri[:, loc]] = loc
    vertex_tri[:V] = first_tri
    vertex_bary[np.arange(V), first_loc] = 1.0
    # edge midpoints: adjacent triangle, half weights on the edge's ends
    et = mesh.edge_tris[:, 0]
    vertex_tri[V:] = et
    for end in (0, 1):
        loc = (tri[et] == mesh.edges[:, end][:, None]).argmax(axis=1)
        vertex_bary[V + np.arange(E), loc] += 0.5

    return fine, Prolongation(mesh, fine, parent, vertex_tri, vertex_bary)


def save_mesh(mesh, path):
    """Write a mesh in the plain-text format read by `load_mesh`."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_vertices} {mesh.num_edges} "
                 f"{mesh.num_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def load_mesh(path):
    """Read a mesh from the plain-text format.

    Layout: a header line `V E T`, then V lines `x y`, then T lines `i j k`
    with 0-based counterclockwise vertex indices, whitespace-separated.
    Edges are derived from the triangles; the header's E is checked against
    the derived count.
    """
    with open(path) as fh:
        lines = fh.readlines()

    def parse(lineno, text, n, conv, what):
        parts = text.split()
        if len(parts) != n:
            raise MeshFormatError(
                f"{path}:{lineno}: expected {n} {what} fields, "
                f"got {len(parts)}")
        try:
            return [conv(p) for p in parts]
        except ValueError as exc:
            raise MeshFormatError(f"{path}:{lineno}: {exc}") from None

    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise MeshFormatError(f"{path}:1: empty mesh file")
    nV, nE, nT = parse(rows[0][0], rows[0][1], 3, int, "header")
    if len(rows) != 1 + nV + nT:
        raise MeshFormatError(
            f"{path}:{rows[-1][0]}: expected {1 + nV + nT} data lines "
            f"(header {nV} vertices {nT} triangles), got {len(rows)}")
    vertices = np.array([parse(no, ln, 2, float, "vertex")
                         for no, ln in rows[1:1 + nV]])
    triangles = np.array([parse(no, ln, 3, int, "triangle")
                          for no, ln in rows[1 + nV:]])
    mesh = Mesh(vertices, triangles)
    if mesh.num_edges != nE:
        raise MeshTopologyError(
            f"{path}: header declares {nE} edges but the triangles "
            f"imply {mesh.num_edges}")
    return mesh
