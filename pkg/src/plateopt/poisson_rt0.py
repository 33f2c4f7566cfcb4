"""Lowest-order Raviart-Thomas mixed solution operator for the Poisson
problem: edge-flux unknowns, piecewise-constant scalars, saddle-point solve."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import GAUSS3_BARY, cell_integrals, eval_at, gauss_points

__all__ = ["P0Field", "RT0Field", "MixedSystem", "solve_poisson_rt0",
           "rt0_norms"]


class P0Field:
    """Piecewise-constant scalar field: one value per triangle."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_triangles,):
            raise ValueError("P0Field needs one value per triangle")
        self.mesh = mesh
        self.values = values

    def at_points(self, mesh, tris, bary, xy):
        if mesh is not self.mesh:
            raise ValueError("field evaluated on a different mesh")
        return self.values[tris]


class RT0Field:
    """Lowest-order Raviart-Thomas vector field.

    The coefficient of edge e is the (constant) normal component of the field
    w.r.t. the global edge normal; it is single-valued across interior edges
    by construction.
    """

    def __init__(self, mesh, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (mesh.num_edges,):
            raise ValueError("RT0Field needs one coefficient per edge")
        self.mesh = mesh
        self.coeffs = coeffs

    def at_points(self, tris, xy):
        """Evaluate the vector field at `xy`, each point inside triangle
        `tris[i]`; returns (K, 2)."""
        m = self.mesh
        out = np.zeros((len(xy), 2))
        for j in range(3):
            e = m.tri_edges[tris, j]
            scale = (m.tri_edge_sign[tris, j] * self.coeffs[e]
                     * m.edge_lengths[e] / (2.0 * m.areas[tris]))
            opp = m.vertices[m.triangles[tris, j]]
            out += scale[:, None] * (xy - opp)
        return out

    def divergence(self):
        """Per-triangle (constant) divergence, shape (T,)."""
        m = self.mesh
        contrib = (m.tri_edge_sign * m.edge_lengths[m.tri_edges]
                   * self.coeffs[m.tri_edges])
        return contrib.sum(axis=1) / m.areas


class MixedSystem:
    """Assembled saddle-point system [[M, B^T], [B, 0]] for the mixed
    Poisson problem on a mesh: M the RT0 mass matrix over edges, B the
    divergence coupling to element values."""

    def __init__(self, mesh):
        self.mesh = mesh
        E, T = mesh.num_edges, mesh.num_triangles
        self.mass = _rt0_mass(mesh)
        self.div = _rt0_div(mesh)
        self.matrix = sp.bmat([[self.mass, self.div.T],
                               [self.div, None]], format="csc")
        self.dim = E + T
        self._lu = None

    def solve(self, rhs_flux, rhs_elem):
        """Solve for (edge coefficients, element values)."""
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        sol = self._lu.solve(np.concatenate([rhs_flux, rhs_elem]))
        E = self.mesh.num_edges
        return sol[:E], sol[E:]


def _rt0_mass(mesh):
    """RT0 mass matrix over edges (exact; quadratic integrand)."""
    T = mesh.num_triangles
    gp = gauss_points(mesh)                                # (T, 3, 2)
    opp = mesh.vertices[mesh.triangles]                    # (T, 3, 2)
    lengths = mesh.edge_lengths[mesh.tri_edges]            # (T, 3)
    coef = mesh.tri_edge_sign * lengths / (2.0 * mesh.areas[:, None])
    # basis j at the Gauss points: coef_j * (x_g - P_j)
    vals = coef[:, :, None, None] * (gp[:, None, :, :] - opp[:, :, None, :])
    local = np.einsum("tjgd,tkgd->tjk", vals, vals) \
        * (mesh.areas[:, None, None] / 3.0)
    rows = np.repeat(mesh.tri_edges, 3, axis=1).ravel()
    cols = np.tile(mesh.tri_edges, (1, 3)).ravel()
    M = sp.coo_matrix((local.reshape(T, 9).ravel(), (rows, cols)),
                      shape=(mesh.num_edges, mesh.num_edges))
    return M.tocsr()

def _rt0_div(mesh):
    """Divergence coupling B with B[t, e] = integral over t of div(psi_e)."""
    vals = (mesh.tri_edge_sign
            * mesh.edge_lengths[mesh.tri_edges]).ravel()
    rows = np.repeat(np.arange(mesh.num_triangles), 3)
    cols = mesh.tri_edges.ravel()
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(mesh.num_triangles, mesh.num_edges)).tocsr()


def solve_poisson_rt0(mesh, rhs):
    """Solve the mixed form of -Laplace(y) = rhs, y = 0 on the boundary.

    Returns (y, v) with y piecewise constant and v the RT0 flux; the Dirichlet
    condition is natural in the mixed form. Element loads use the 3-point
    Gauss rule.
    """
    system = MixedSystem(mesh)
    g = cell_integrals(mesh, rhs)
    c, y = system.solve(np.zeros(mesh.num_edges), -g)
    return P0Field(mesh, y), RT0Field(mesh, c)


def rt0_norms(y_h, v_h, y_exact, grad_exact=None):
    """Errors of a mixed solution against reference functions.

    Returns (l2_scalar, l2_flux, linf_scalar): L2 errors by the 3-point Gauss
    rule (flux NaN when `v_h` or `grad_exact` is missing) and the maximum
    scalar error sampled per triangle at its vertices, Gauss points and
    centroid.
    """
    mesh = y_h.mesh
    if v_h is not None and v_h.mesh is not mesh:
        raise ValueError("scalar and flux fields live on different meshes")
    T = mesh.num_triangles
    w = mesh.areas[:, None] / 3.0

    xy = gauss_points(mesh).reshape(-1, 2)
    tris = np.repeat(np.arange(T), 3)
    bary = np.tile(GAUSS3_BARY, (T, 1))
    ye = eval_at(mesh, y_exact, tris, bary, xy).reshape(T, 3)
    diff = ye - y_h.values[:, None]
    l2 = float(np.sqrt((w * diff ** 2).sum()))

    if v_h is None or grad_exact is None:
        l2_flux = float("nan")
    else:
        gv = v_h.at_points(tris, xy)
        ge = np.asarray(grad_exact(xy), dtype=float)
        d2 = ((gv - ge) ** 2).sum(axis=1).reshape(T, 3)
        l2_flux = float(np.sqrt((w * d2).sum()))

    cb = np.full((T, 3), 1.0 / 3.0)
    yc = eval_at(mesh, y_exact, np.arange(T), cb, mesh.centroids)
    linf = max(float(np.abs(diff).max()),
               float(np.abs(yc - y_h.values).max()))
    eye = np.eye(3)
    for j in range(3):
        corners = mesh.vertices[mesh.triangles[:, j]]
        yv = eval_at(mesh, y_exact, np.arange(T),
                     np.tile(eye[j], (T, 1)), corners)
        linf = max(linf, float(np.abs(yv - y_h.values).max()))
    return l2, l2_flux, linf
