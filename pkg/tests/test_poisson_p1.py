import numpy as np
import pytest
from scipy.integrate import dblquad

from plateopt.mesh import build_uniform
from plateopt.poisson_p1 import P1Field, assemble_mass, assemble_stiffness, \
    p1_norms, solve_poisson_p1
from plateopt.problems import manufactured_poisson
from plateopt.quadrature import GAUSS3_BARY, gauss_points, load_vector_p1


def test_no_interior_vertices_on_coarsest_mesh():
    A = assemble_stiffness(build_uniform(1))
    assert A.dim == 0


def test_level2_stiffness_is_scalar_four():
    # hand assembly: the single interior vertex of the 2x2 grid couples to
    # itself with entry 4 on right isoceles triangles (five-point stencil)
    A = assemble_stiffness(build_uniform(2))
    assert A.dim == 1
    assert A.matrix.toarray() == pytest.approx(np.array([[4.0]]), abs=1e-14)


def test_stiffness_symmetry():
    A = assemble_stiffness(build_uniform(4)).matrix
    assert abs(A - A.T).max() == 0.0


def test_stiffness_positive_definite():
    A = assemble_stiffness(build_uniform(3)).matrix.toarray()
    np.linalg.cholesky(A)


def test_zero_rhs_gives_zero_field():
    sol = solve_poisson_p1(build_uniform(3), lambda xy: np.zeros(len(xy)))
    assert np.abs(sol.values).max() == 0.0


def test_level2_center_value_is_quarter_load():
    # dense hand-solve oracle: N = 1, A = [[4]], so y_center = b_center / 4
    # with the load entry accumulated by the same 3-point Gauss rule
    mesh = build_uniform(2)
    g, _, _ = manufactured_poisson()
    b = 0.0
    center = 4  # vertex at (0.5, 0.5) in the 3x3 vertex grid
    pts = gauss_points(mesh)
    for t, tri in enumerate(mesh.triangles):
        for j, v in enumerate(tri):
            if v != center:
                continue
            for gp in range(3):
                b += mesh.areas[t] / 3.0 * g(pts[t, gp:gp + 1])[0] \
                    * GAUSS3_BARY[gp, j]
    sol = solve_poisson_p1(mesh, g)
    assert sol.values[center] == pytest.approx(b / 4.0, rel=1e-13)


def test_dirichlet_values_exact_zero():
    g, _, _ = manufactured_poisson()
    sol = solve_poisson_p1(build_uniform(3), g)
    assert sol.is_dirichlet()


def test_manufactured_convergence_orders():
    g, y, grad = manufactured_poisson()
    errs = []
    for k in (4, 5, 6, 7):
        mesh = build_uniform(k)
        l2, h1, _ = p1_norms(solve_poisson_p1(mesh, g), y, grad)
        errs.append((l2, h1))
    for (l2a, h1a), (l2b, h1b) in zip(errs, errs[1:]):
        assert 1.8 <= np.log2(l2a / l2b) <= 2.2
        assert 0.85 <= np.log2(h1a / h1b) <= 1.15


def test_norms_vanish_for_linear_interpolant():
    mesh = build_uniform(3)

    def lin(xy):
        return 0.25 + 0.5 * xy[:, 0] - 0.125 * xy[:, 1]

    field = P1Field(mesh, lin(mesh.vertices))
    l2, h1, linf = p1_norms(field, lin,
                            lambda xy: np.tile([0.5, -0.125], (len(xy), 1)))
    assert l2 <= 1e-13 and h1 <= 1e-13 and linf <= 1e-13


def test_interpolant_linf_drops_fourfold():
    _, y, _ = manufactured_poisson()
    vals = []
    for k in (4, 5):
        mesh = build_uniform(k)
        field = P1Field(mesh, y(mesh.vertices))
        _, _, linf = p1_norms(field, y)
        vals.append(linf)
    assert vals[0] / vals[1] == pytest.approx(4.0, rel=0.2)


def test_h1_error_of_zero_field_matches_quadrature_oracle():
    # independent oracle: |sin sin|_H1 via adaptive quadrature
    _, y, grad = manufactured_poisson()
    seminorm2, _ = dblquad(
        lambda x2, x1: np.pi ** 2 * (
            (np.cos(np.pi * x1) * np.sin(np.pi * x2)) ** 2
            + (np.sin(np.pi * x1) * np.cos(np.pi * x2)) ** 2),
        0, 1, 0, 1)
    oracle = np.sqrt(seminorm2)
    mesh = build_uniform(7)
    zero = P1Field(mesh, np.zeros(mesh.num_vertices))
    _, h1, _ = p1_norms(zero, y, grad)
    assert h1 == pytest.approx(oracle, abs=1e-3)


def test_discrete_maximum_principle():
    mesh = build_uniform(4)

    def g(xy):
        return np.exp(xy[:, 0]) * (1.2 + np.sin(3 * xy[:, 1]))

    assert g(mesh.vertices).min() > 0
    sol = solve_poisson_p1(mesh, g)
    assert sol.values.min() >= -1e-13


def test_galerkin_orthogonality():
    rng = np.random.default_rng(3)
    mesh = build_uniform(4)
    g, _, _ = manufactured_poisson()
    A = assemble_stiffness(mesh)
    sol = solve_poisson_p1(mesh, g)
    b = load_vector_p1(mesh, g)[A.interior]
    for _ in range(5):
        w = rng.normal(size=A.dim)
        lhs = w @ (A.matrix @ sol.values[A.interior])
        assert abs(lhs - w @ b) <= 1e-10 * (1 + abs(lhs))


def test_mass_matrix_row_sums():
    mesh = build_uniform(3)
    M = assemble_mass(mesh)
    ones = np.ones(M.dim)
    # (1, phi_j) sums to the interior-hat volumes; total below domain area
    total = ones @ (M.matrix @ ones)
    assert 0 < total < 1.0


def test_field_requires_matching_mesh():
    a = build_uniform(2)
    b = build_uniform(3)
    field = P1Field(a, np.zeros(a.num_vertices))
    with pytest.raises(ValueError):
        field.at_points(b, np.zeros(1, int), np.full((1, 3), 1 / 3),
                        np.array([[0.5, 0.5]]))
