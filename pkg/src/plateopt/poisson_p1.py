"""Continuous piecewise-linear solution operator for the homogeneous
Dirichlet Poisson problem, with assembly and error-norm utilities."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import GAUSS3_BARY, eval_at, gauss_points, load_vector_p1

__all__ = ["P1Field", "SparseOperator", "assemble_stiffness", "assemble_mass",
           "solve_poisson_p1", "p1_norms"]


class P1Field:
    """Continuous piecewise-linear scalar field: one value per vertex."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_vertices,):
            raise ValueError("P1Field needs one value per vertex")
        self.mesh = mesh
        self.values = values

    def at_points(self, mesh, tris, bary, xy):
        if mesh is not self.mesh:
            raise ValueError("field evaluated on a different mesh")
        return np.einsum("kj,kj->k", bary,
                         self.values[mesh.triangles[tris]])

    def gradients(self):
        """Per-triangle gradient, shape (T, 2)."""
        m = self.mesh
        corners = m.vertices[m.triangles]                  # (T, 3, 2)
        vals = self.values[m.triangles]                    # (T, 3)
        grad = np.zeros((m.num_triangles, 2))
        for j in range(3):
            e = corners[:, (j + 2) % 3] - corners[:, (j + 1) % 3]
            gphi = np.column_stack([-e[:, 1], e[:, 0]]) / (2 * m.areas[:, None])
            grad += vals[:, j, None] * gphi
        return grad

    def is_dirichlet(self, tol=0.0):
        """True if the field vanishes on every boundary vertex."""
        b = self.values[self.mesh.boundary_vertex]
        return bool(np.all(np.abs(b) <= tol))


class SparseOperator:
    """Symmetric positive definite operator over interior-vertex dofs."""

    def __init__(self, mesh, matrix, interior):
        self.mesh = mesh
        self.matrix = matrix.tocsc()
        self.interior = interior
        self.dim = matrix.shape[0]
        self._lu = None

    def solve(self, rhs):
        if self.dim == 0:
            return np.zeros(0)
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        return self._lu.solve(rhs)


def _p1_gradients(mesh):
    """Gradients of the three local basis functions per triangle, (T, 3, 2)."""
    corners = mesh.vertices[mesh.triangles]
    g = np.empty((mesh.num_triangles, 3, 2))
    for j in range(3):
        e = corners[:, (j + 2) % 3] - corners[:, (j + 1) % 3]
        g[:, j, 0] = -e[:, 1]
        g[:, j, 1] = e[:, 0]
    return g / (2 * mesh.areas[:, None, None])


def _assemble(mesh, local):
    """Assemble per-triangle 3x3 blocks into an interior-vertex CSR matrix."""
    interior = mesh.interior_vertices()
    index = np.full(mesh.num_vertices, -1, dtype=np.int64)
    index[interior] = np.arange(len(interior))
    ids = index[mesh.triangles]                            # (T, 3)
    rows = np.repeat(ids, 3, axis=1).ravel()
    cols = np.tile(ids, (1, 3)).ravel()
    vals = local.reshape(len(local), 9).ravel()
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                      shape=(len(interior), len(interior)))
    return SparseOperator(mesh, A.tocsr(), interior)


def assemble_stiffness(mesh):
    """Stiffness matrix (grad phi_i, grad phi_j) over interior vertices."""
    g = _p1_gradients(mesh)
    local = np.einsum("tjd,tkd->tjk", g, g) * mesh.areas[:, None, None]
    return _assemble(mesh, local)


def assemble_mass(mesh):
    """Mass matrix (phi_i, phi_j) over interior vertices, by the 3-point
    Gauss rule (exact for the quadratic integrand)."""
    local = np.einsum("gj,gk->jk", GAUSS3_BARY, GAUSS3_BARY)
    local = local[None, :, :] * (mesh.areas[:, None, None] / 3.0)
    return _assemble(mesh, local)


def solve_poisson_p1(mesh, rhs):
    """Solve -Laplace(y) = rhs with y = 0 on the boundary.

    `rhs` may be a callable on physical points or any field implementing the
    `at_points` protocol; load integrals use the 3-point Gauss rule.
    """
    A = assemble_stiffness(mesh)
    b = load_vector_p1(mesh, rhs)[A.interior]
    values = np.zeros(mesh.num_vertices)
    values[A.interior] = A.solve(b)
    return P1Field(mesh, values)


def p1_norms(a, exact, exact_grad=None):
    """Errors of a P1Field against a reference function.

    Returns (l2, h1, linf): L2 error and H1 seminorm error by the 3-point
    Gauss rule per triangle (h1 is NaN when `exact_grad` is missing), and the
    maximum error sampled at vertices, Gauss points and centroids.
    """
    mesh = a.mesh
    T = mesh.num_triangles
    w = mesh.areas[:, None] / 3.0

    xy = gauss_points(mesh).reshape(-1, 2)
    tris = np.repeat(np.arange(T), 3)
    bary = np.tile(GAUSS3_BARY, (T, 1))
    diff = (a.at_points(mesh, tris, bary, xy)
            - eval_at(mesh, exact, tris, bary, xy)).reshape(T, 3)
    l2 = float(np.sqrt((w * diff ** 2).sum()))

    if exact_grad is None:
        h1 = float("nan")
    else:
        ga = a.gradients()[:, None, :]                     # (T, 1, 2)
        ge = np.asarray(exact_grad(xy), dtype=float).reshape(T, 3, 2)
        h1 = float(np.sqrt((w * ((ga - ge) ** 2).sum(axis=2)).sum()))

    linf = float(np.abs(diff).max())
    verts = mesh.vertices
    ev = eval_at(mesh, exact, None, None, verts) \
        if not hasattr(exact, "at_points") else exact.values
    linf = max(linf, float(np.abs(a.values - ev).max()))
    cb = np.full((T, 3), 1.0 / 3.0)
    diff_c = a.at_points(mesh, np.arange(T), cb, mesh.centroids) \
        - eval_at(mesh, exact, np.arange(T), cb, mesh.centroids)
    linf = max(linf, float(np.abs(diff_c).max()))
    return l2, h1, linf
