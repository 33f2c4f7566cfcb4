import numpy as np
import pytest

from plateopt.mesh import build_uniform
from plateopt.problems import Example1, example1_exact, example1_spec, \
    example2_spec, manufactured_poisson
from plateopt.quadrature import integrate


def test_state_junction_values():
    # quintic branch meets the constant and zero branches exactly
    assert Example1.state_radial(0.125) == pytest.approx(-0.1, abs=1e-12)
    assert np.polyval(Example1._poly, 0.125) == pytest.approx(-0.1, abs=1e-12)
    assert np.polyval(Example1._poly, 0.375) == pytest.approx(0.0, abs=1e-12)


def test_state_c2_matching_at_junctions():
    # first and second radial derivatives of the quintic vanish at both
    # junction radii, matching the constant branches
    for r in (0.125, 0.375):
        assert abs(np.polyval(Example1._dpoly, r)) <= 1e-9
        assert abs(np.polyval(Example1._ddpoly, r)) <= 1e-9


def test_derivative_formulas_match_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for r in 0.125 + 0.25 * rng.random(8):
        fd1 = (np.polyval(Example1._poly, r + h)
               - np.polyval(Example1._poly, r - h)) / (2 * h)
        assert fd1 == pytest.approx(np.polyval(Example1._dpoly, r), abs=1e-7)
        fd2 = (np.polyval(Example1._dpoly, r + h)
               - np.polyval(Example1._dpoly, r - h)) / (2 * h)
        assert fd2 == pytest.approx(np.polyval(Example1._ddpoly, r), abs=1e-5)


def test_state_bounds_and_active_region():
    rng = np.random.default_rng(9)
    xy = rng.random((4000, 2))
    r = Example1.radius(xy)
    y = Example1.y(xy)
    assert (y >= -Example1.tau - 1e-14).all()
    on = r <= 0.125
    assert np.allclose(y[on], -0.1)
    assert (y[r > 0.126] > -0.1).all()


def test_adjoint_support_and_sign():
    xy = np.array([[0.5, 0.5], [0.56, 0.5], [0.7, 0.5], [0.1, 0.9]])
    q = Example1.q(xy)
    assert q[0] == pytest.approx(1.0 / 64.0)
    assert q[1] > 0
    assert q[2] == 0.0 and q[3] == 0.0


def test_exact_values_at_quarter_point():
    # closed-form substitution at (3/4, 1/2), radius 1/4: the adjoint
    # vanishes, the control clamps at m**-3, and the radial laplacian is
    # y'' + y'/r = 0 + 0.75/0.25 = 3
    y, q, l, z, f, y_t, e = example1_exact((0.75, 0.5))
    assert q == 0.0
    assert l == pytest.approx(0.35 ** -3, rel=1e-14)
    assert l == pytest.approx(23.3236, abs=1e-4)
    assert Example1.laplace_y(np.array([[0.75, 0.5]]))[0] == \
        pytest.approx(3.0, abs=1e-12)
    assert e == pytest.approx(-3.0 - np.sin(0.75 * np.pi) * 0.35 ** -3,
                              rel=1e-12)
    assert e == pytest.approx(-19.49, abs=5e-3)


def test_center_control_clamps_at_lower_bound():
    y, q, l, z, f, y_t, e = example1_exact((0.5, 0.5))
    assert q == pytest.approx(1.0 / 64.0)
    assert 3 * q * z == pytest.approx(0.046875)
    assert 3 * q * z > 0.45 ** 4
    assert l == pytest.approx(0.45 ** -3, rel=1e-14)
    assert l == pytest.approx(10.9739, abs=1e-4)


def test_example1_spec_parameters():
    spec = example1_spec("rt0")
    assert (spec.tau, spec.m, spec.M, spec.alpha) == (0.1, 0.35, 0.45, 1.0)
    assert spec.proj_lo == pytest.approx(0.01500625, abs=1e-12)
    assert spec.proj_hi == pytest.approx(0.04100625, abs=1e-12)
    f_center = spec.load(np.array([[0.5, 0.5]]))[0]
    assert f_center == pytest.approx(2 * np.pi ** 2, rel=1e-14)
    assert f_center == pytest.approx(19.739, abs=1e-3)


def test_example2_spec_parameters():
    spec = example2_spec("p1")
    assert (spec.tau, spec.m, spec.M) == (0.01, 0.1, 0.2)
    assert spec.l_min == pytest.approx(125.0, rel=1e-14)
    assert spec.l_max == pytest.approx(1000.0, rel=1e-14)
    xy = np.array([[0.25, 0.5], [0.5, 0.5], [0.75, 0.5]])
    assert np.allclose(spec.load(xy), [-0.04, -0.04, 0.01])


def test_example2_load_is_elementwise_constant():
    # the sign-change interface is a mesh line at every level >= 2, and the
    # elementwise evaluation classifies by centroid
    mesh = build_uniform(3)
    spec = example2_spec("rt0")
    tris = np.arange(mesh.num_triangles)
    vals = spec.load.at_points(mesh, tris, None, None)
    left = mesh.centroids[:, 0] < 0.5
    assert np.allclose(vals[left], -0.04)
    assert np.allclose(vals[~left], 0.01)


def test_state_equation_residual_by_finite_differences():
    # -laplace(y) = z*l + e_extra away from the junction circles
    rng = np.random.default_rng(4)
    pts = []
    while len(pts) < 12:
        p = 0.05 + 0.9 * rng.random(2)
        r = Example1.radius(p[None, :])[0]
        if min(abs(r - 0.125), abs(r - 0.375)) > 0.02:
            pts.append(p)
    h = 1e-4
    for p in pts:
        stencil = np.array([p, p + [h, 0], p - [h, 0],
                            p + [0, h], p - [0, h]])
        y = Example1.y(stencil)
        lap = (y[1:].sum() - 4 * y[0]) / h ** 2
        rhs = (Example1.z(p[None])[0] * Example1.l(p[None])[0]
               + Example1.e_extra(p[None])[0])
        assert -lap == pytest.approx(rhs, abs=1e-5)


def test_projection_identity_everywhere():
    from plateopt.kkt import _project
    rng = np.random.default_rng(6)
    xy = rng.random((1000, 2))
    spec = example1_spec("rt0")
    want = _project(3.0 * Example1.q(xy) * Example1.z(xy), spec)
    assert np.allclose(Example1.l(xy), want, atol=0)


def test_example1_data_diagonal_symmetry():
    rng = np.random.default_rng(8)
    xy = rng.random((500, 2))
    sw = xy[:, ::-1]
    for fn in (Example1.y, Example1.q, Example1.l, Example1.z, Example1.f,
               Example1.y_target, Example1.e_extra):
        assert np.allclose(fn(xy), fn(sw), atol=1e-13)


def test_manufactured_values():
    g, y, grad = manufactured_poisson()
    assert y(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.0)
    edge = np.array([[0.0, 0.3], [1.0, 0.7], [0.2, 0.0], [0.9, 1.0]])
    assert np.abs(y(edge)).max() <= 1e-15
    mesh = build_uniform(7)
    assert integrate(mesh, lambda xy: y(xy) ** 2) == \
        pytest.approx(0.25, abs=1e-4)
