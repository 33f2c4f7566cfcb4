"""Triangle quadrature: the 3-point edge-midpoint Gauss rule and uniform
subdivision tables used for integrands with pointwise projections."""

import numpy as np

# Barycentric coordinates of the edge midpoints; degree-2 exact with equal
# weights area/3.
GAUSS3_BARY = np.array([
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
])


def gauss_points(mesh, tris=None):
    """Physical coordinates of the 3 Gauss points per triangle, shape (T, 3, 2)."""
    t = mesh.triangles if tris is None else mesh.triangles[tris]
    corners = mesh.vertices[t]                     # (T, 3, 2)
    return np.einsum("gj,tjd->tgd", GAUSS3_BARY, corners)


def eval_at(mesh, f, tris, bary, xy):
    """Evaluate data `f` at points given by triangle index + barycentric +
    physical coordinates.

    Fields expose `at_points(mesh, tris, bary, xy)`; plain callables are
    evaluated on the physical coordinates.
    """
    if hasattr(f, "at_points"):
        return f.at_points(mesh, tris, bary, xy)
    return np.asarray(f(xy), dtype=float)


def eval_on_gauss(mesh, f):
    """Values of `f` at all Gauss points, shape (T, 3)."""
    T = mesh.num_triangles
    xy = gauss_points(mesh)
    tris = np.repeat(np.arange(T), 3)
    bary = np.tile(GAUSS3_BARY, (T, 1))
    vals = eval_at(mesh, f, tris, bary, xy.reshape(-1, 2))
    return vals.reshape(T, 3)


def cell_integrals(mesh, f):
    """Per-triangle integrals of `f` by the 3-point Gauss rule, shape (T,)."""
    vals = eval_on_gauss(mesh, f)
    return mesh.areas / 3.0 * vals.sum(axis=1)


def integrate(mesh, f):
    """Integral of `f` over the whole mesh by the 3-point Gauss rule."""
    return float(cell_integrals(mesh, f).sum())


def load_vector_p1(mesh, f):
    """Load vector (f, phi_j) for all vertices j, shape (V,)."""
    vals = eval_on_gauss(mesh, f)                  # (T, 3)
    w = mesh.areas[:, None] / 3.0
    local = np.einsum("tg,gj->tj", w * vals, GAUSS3_BARY)
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


def subdivide_bary(depth):
    """Barycentric corner coordinates of the 4**depth congruent subtriangles
    obtained by repeated red subdivision of the reference triangle.

    Returns an array of shape (4**depth, 3, 3): subtriangle x corner x bary.
    """
    tris = [np.eye(3)]
    for _ in range(depth):
        nxt = []
        for t in tris:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array([a, ab, ca]), np.array([ab, b, bc]),
                    np.array([ca, bc, c]), np.array([ab, bc, ca])]
        tris = nxt
    return np.array(tris)


def subdivision_gauss_bary(depth):
    """Gauss-point and centroid barycentric tables for a subdivided triangle.

    Returns (gauss, centroid) with shapes (S, 3, 3) and (S, 3) where
    S = 4**depth; all coordinates are barycentric w.r.t. the parent triangle.
    """
    sub = subdivide_bary(depth)                    # (S, 3, 3)
    gauss = np.einsum("gj,sjb->sgb", GAUSS3_BARY, sub)
    centroid = sub.mean(axis=1)
    return gauss, centroid
