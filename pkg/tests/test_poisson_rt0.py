import numpy as np
import pytest

from plateopt.mesh import build_uniform
from plateopt.poisson_rt0 import MixedSystem, P0Field, RT0Field, rt0_norms, \
    solve_poisson_rt0
from plateopt.problems import manufactured_poisson
from plateopt.quadrature import cell_integrals, eval_on_gauss


def test_zero_rhs_gives_zero_fields():
    y, v = solve_poisson_rt0(build_uniform(3),
                             lambda xy: np.zeros(len(xy)))
    assert np.abs(y.values).max() <= 1e-14
    assert np.abs(v.coeffs).max() <= 1e-14


def test_constant_load_matches_dense_oracle():
    # dense LU oracle on the assembled saddle system
    mesh = build_uniform(2)
    system = MixedSystem(mesh)
    g = cell_integrals(mesh, lambda xy: np.ones(len(xy)))
    rhs = np.concatenate([np.zeros(mesh.num_edges), -g])
    dense = np.linalg.solve(system.matrix.toarray(), rhs)
    y, v = solve_poisson_rt0(mesh, lambda xy: np.ones(len(xy)))
    got = np.concatenate([v.coeffs, y.values])
    assert np.abs(got - dense).max() <= 1e-12


def test_saddle_matrix_block_structure():
    mesh = build_uniform(2)
    system = MixedSystem(mesh)
    K = system.matrix.toarray()
    E = mesh.num_edges
    assert np.abs(K - K.T).max() <= 1e-14
    assert np.abs(K[E:, E:]).max() == 0.0
    eig = np.linalg.eigvalsh(K)
    assert eig.min() < 0 < eig.max()


def test_local_conservation():
    g, _, _ = manufactured_poisson()
    for k in (3, 4, 5):
        mesh = build_uniform(k)
        y, v = solve_poisson_rt0(mesh, g)
        resid = v.divergence() * mesh.areas + cell_integrals(mesh, g)
        gmax = np.abs(eval_on_gauss(mesh, g)).max()
        assert np.abs(resid).max() <= 1e-10 * (1.0 + gmax)


def test_manufactured_convergence_orders():
    g, y, grad = manufactured_poisson()
    errs = []
    for k in (4, 5, 6, 7):
        mesh = build_uniform(k)
        yh, vh = solve_poisson_rt0(mesh, g)
        errs.append(rt0_norms(yh, vh, y, grad))
    for (l2a, fa, _), (l2b, fb, _) in zip(errs, errs[1:]):
        assert 0.85 <= np.log2(l2a / l2b) <= 1.15
        assert 0.85 <= np.log2(fa / fb) <= 1.15


def test_scalar_linf_order_between_levels_5_and_6():
    g, y, grad = manufactured_poisson()
    vals = []
    for k in (5, 6):
        mesh = build_uniform(k)
        yh, vh = solve_poisson_rt0(mesh, g)
        vals.append(rt0_norms(yh, vh, y, grad)[2])
    assert 0.85 <= np.log2(vals[0] / vals[1]) <= 1.15


def test_normal_component_single_valued_across_edges():
    rng = np.random.default_rng(11)
    mesh = build_uniform(3)
    v = RT0Field(mesh, rng.normal(size=mesh.num_edges))
    inner = np.nonzero(~mesh.boundary_edge)[0]
    for e in rng.choice(inner, size=10, replace=False):
        mid = 0.5 * (mesh.vertices[mesh.edges[e, 0]]
                     + mesh.vertices[mesh.edges[e, 1]])[None, :]
        n = mesh.edge_normals[e]
        t0, t1 = mesh.edge_tris[e]
        a = v.at_points(np.array([t0]), mid)[0] @ n
        b = v.at_points(np.array([t1]), mid)[0] @ n
        assert abs(a - b) <= 1e-12
        assert abs(a - v.coeffs[e]) <= 1e-12


def test_divergence_formula_matches_finite_differences():
    rng = np.random.default_rng(5)
    mesh = build_uniform(2)
    v = RT0Field(mesh, rng.normal(size=mesh.num_edges))
    div = v.divergence()
    for t in range(mesh.num_triangles):
        c = mesh.centroids[t:t + 1]
        h = 1e-6
        dx = (v.at_points(np.array([t]), c + [[h, 0]])[0, 0]
              - v.at_points(np.array([t]), c - [[h, 0]])[0, 0]) / (2 * h)
        dy = (v.at_points(np.array([t]), c + [[0, h]])[0, 1]
              - v.at_points(np.array([t]), c - [[0, h]])[0, 1]) / (2 * h)
        assert div[t] == pytest.approx(dx + dy, rel=1e-6, abs=1e-8)


def test_elementwise_average_rhs_equivalence():
    mesh = build_uniform(3)
    g, _, _ = manufactured_poisson()
    avg = P0Field(mesh, eval_on_gauss(mesh, g).mean(axis=1))
    ya, _ = solve_poisson_rt0(mesh, g)
    yb, _ = solve_poisson_rt0(mesh, avg)
    assert np.abs(ya.values - yb.values).max() < 1e-12


def test_exact_p0_injection_has_zero_error():
    mesh = build_uniform(3)
    g, y, grad = manufactured_poisson()
    yh, _ = solve_poisson_rt0(mesh, g)
    l2, _, linf = rt0_norms(yh, None, yh)
    assert l2 <= 1e-14 and linf <= 1e-14


def test_mesh_mismatch_rejected():
    a = build_uniform(2)
    b = build_uniform(3)
    y = P0Field(a, np.zeros(a.num_triangles))
    v = RT0Field(b, np.zeros(b.num_edges))
    with pytest.raises(ValueError):
        rt0_norms(y, v, lambda xy: np.zeros(len(xy)))
