"""Benchmark problems: a manufactured thickness-design problem with known
solution (example 1), a thin-plate problem with piecewise-constant load
(example 2), and a manufactured Poisson problem for the FEM convergence
harness."""

import numpy as np

from .kkt import ProblemSpec, _project

__all__ = ["PiecewiseConstantLoad", "Example1", "example1_exact",
           "example1_spec", "example2_spec", "manufactured_poisson"]


class PiecewiseConstantLoad:
    """Load that is constant on every triangle; evaluated at centroids so
    that interfaces aligned with mesh edges never hit quadrature points."""

    def __init__(self, fn):
        self.fn = fn

    def at_points(self, mesh, tris, bary, xy):
        return np.asarray(self.fn(mesh.centroids[tris]), dtype=float)

    def __call__(self, xy):
        return np.asarray(self.fn(xy), dtype=float)


class Example1:
    """Manufactured problem with known optimal state, adjoint and control.

    Radially symmetric around the center of the unit square: the state is
    clamped at -tau on a disk of radius 1/8, a quintic blends it to zero by
    radius 3/8, and the adjoint is supported on the inner disk. A tracking
    term (weight alpha) and an extra primal load make the construction exact.
    """

    tau = 0.1
    m = 0.35
    M = 0.45
    alpha = 1.0
    center = np.array([0.5, 0.5])
    r_inner = 0.125
    r_outer = 0.375

    # quintic blend coefficients, highest degree first
    _poly = np.array([614.4, -768.0, 352.0, -72.0, 27.0 / 4.0, -27.0 / 80.0])
    _dpoly = np.array([3072.0, -3072.0, 1056.0, -144.0, 27.0 / 4.0])
    _ddpoly = np.array([12288.0, -9216.0, 2112.0, -144.0])

    @classmethod
    def radius(cls, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.linalg.norm(xy - cls.center, axis=1)

    @classmethod
    def state_radial(cls, r):
        r = np.asarray(r, dtype=float)
        mid = np.polyval(cls._poly, r)
        return np.where(r <= cls.r_inner, -cls.tau,
                        np.where(r >= cls.r_outer, 0.0, mid))

    @classmethod
    def state_radial_d1(cls, r):
        r = np.asarray(r, dtype=float)
        mid = np.polyval(cls._dpoly, r)
        return np.where((r > cls.r_inner) & (r < cls.r_outer), mid, 0.0)

    @classmethod
    def state_radial_d2(cls, r):
        r = np.asarray(r, dtype=float)
        mid = np.polyval(cls._ddpoly, r)
        return np.where((r > cls.r_inner) & (r < cls.r_outer), mid, 0.0)

    @classmethod
    def y(cls, xy):
        return cls.state_radial(cls.radius(xy))

    @classmethod
    def grad_y(cls, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        d = xy - cls.center
        r = np.linalg.norm(d, axis=1)
        slope = cls.state_radial_d1(r)
        safe = np.where(r > 0, r, 1.0)
        return (slope / safe)[:, None] * d

    @classmethod
    def laplace_y(cls, xy):
        r = cls.radius(xy)
        band = (r > cls.r_inner) & (r < cls.r_outer)
        safe = np.where(band, r, 1.0)
        return np.where(band, cls.state_radial_d2(r)
                        + cls.state_radial_d1(r) / safe, 0.0)

    @classmethod
    def q(cls, xy):
        r = cls.radius(xy)
        return np.where(r < cls.r_inner, -r ** 2 + 1.0 / 64.0, 0.0)

    @staticmethod
    def z(xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1])

    @classmethod
    def f(cls, xy):
        return 2.0 * np.pi ** 2 * cls.z(xy)

    @classmethod
    def l(cls, xy):
        spec = cls.spec()
        return _project(3.0 * cls.q(xy) * cls.z(xy), spec)

    @classmethod
    def y_target(cls, xy):
        r = cls.radius(xy)
        return np.where(r < cls.r_inner, -5.1, cls.state_radial(r))

    @classmethod
    def e_extra(cls, xy):
        return -cls.laplace_y(xy) - cls.z(xy) * cls.l(xy)

    _spec_cache = {}

    @classmethod
    def spec(cls, disc="rt0"):
        if disc not in cls._spec_cache:
            cls._spec_cache[disc] = ProblemSpec(
                tau=cls.tau, m=cls.m, M=cls.M, load=cls.f, disc=disc,
                alpha=cls.alpha, y_target=cls.y_target,
                extra_load=cls.e_extra, name="ex1")
        return cls._spec_cache[disc]


def example1_exact(point):
    """Exact values (y, q, l, z, f, y_target, e_extra) at one point."""
    xy = np.atleast_2d(np.asarray(point, dtype=float))
    return tuple(float(fn(xy)[0]) for fn in (
        Example1.y, Example1.q, Example1.l, Example1.z, Example1.f,
        Example1.y_target, Example1.e_extra))


def example1_spec(disc="rt0"):
    """Manufactured problem with tracking extension (alpha = 1)."""
    return Example1.spec(disc)


def _example2_load(xy):
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    return np.where(xy[:, 0] <= 0.5, -0.04, 0.01)


_EX2_SPECS = {}


def example2_spec(disc="p1"):
    """Thin plate: tau = 0.01, thickness in [0.1, 0.2], piecewise-constant
    load with a sign change at x1 = 1/2 (aligned with mesh edges)."""
    if disc not in _EX2_SPECS:
        _EX2_SPECS[disc] = ProblemSpec(
            tau=0.01, m=0.1, M=0.2, load=PiecewiseConstantLoad(_example2_load),
            disc=disc, name="ex2")
    return _EX2_SPECS[disc]


def manufactured_poisson():
    """Smooth Poisson test case: returns (g, y_exact, grad_exact) with
    y = sin(pi x1) sin(pi x2)."""

    def y(xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1])

    def g(xy):
        return 2.0 * np.pi ** 2 * y(xy)

    def grad(xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        s1, c1 = np.sin(np.pi * xy[:, 0]), np.cos(np.pi * xy[:, 0])
        s2, c2 = np.sin(np.pi * xy[:, 1]), np.cos(np.pi * xy[:, 1])
        return np.pi * np.column_stack([c1 * s2, s1 * c2])

    return g, y, grad
