"""Solver library and benchmark CLI for an optimal plate-thickness design
problem posed in dual form: a state- and control-constrained elliptic optimal
control problem treated with a quadratic penalty on the state constraint, two
finite element discretizations (lowest-order Raviart-Thomas mixed and
continuous piecewise linear), a semismooth Newton method, and a gamma-h
path-following driver."""

__version__ = "0.1.0"
