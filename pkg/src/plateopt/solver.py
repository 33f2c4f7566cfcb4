"""Semismooth Newton iteration on the optimality-system residual, with
residual-monotone damping, plus the gamma-h path-following driver with
warm-started nested iteration."""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import kkt
from .mesh import build_uniform, refine
from .poisson_rt0 import RT0Field

__all__ = ["NewtonReport", "PathConfig", "PathStep", "PathResult",
           "newton_solve", "prolong_state", "run_path"]


@dataclass
class NewtonReport:
    """Outcome of one Newton solve: iteration count, residual norms after
    each accepted step, halvings used per step, and a failure message when
    not converged."""

    iterations: int
    residuals: list
    converged: bool
    damping: list
    message: str = ""
    gamma: float = 0.0
    level: int | None = None


@dataclass
class PathConfig:
    """Configuration of the path-following driver.

    kappa defaults to the coupling suggested by the error analysis for the
    chosen discretization in 2d: 2 for the mixed ansatz, 4 for P1. The stop
    threshold acts on the relative change of the penalized cost between
    levels; 0 disables early stopping (the level budget then decides).
    """

    level0: int
    gamma0: float
    levels: int = 1
    kappa: float | None = None
    tol: float = 1e-3
    max_iterations: int = 30
    max_halvings: int = 10
    stop_rel_change: float = 0.0
    retry_conservative: bool = True

    def resolved_kappa(self, disc):
        if self.kappa is not None:
            return self.kappa
        return 2.0 if disc == "rt0" else 4.0


@dataclass
class PathStep:
    level: int
    gamma: float
    state: object
    report: NewtonReport
    objective: float
    wall_s: float = 0.0
    retried: bool = False


@dataclass
class PathResult:
    steps: list = field(default_factory=list)
    prolongations: list = field(default_factory=list)
    failed: bool = False
    failure: str = ""

    def __iter__(self):
        return iter(self.steps)

    def converged_steps(self):
        return [s for s in self.steps if s.report.converged]


def newton_solve(x0, spec, gamma, tol=1e-3, max_iterations=30,
                 max_halvings=10, depth=2):
    """Solve F(x) = 0 at fixed gamma by damped semismooth Newton steps.

    Each step solves DF(x) d = -F(x) with a sparse direct factorization and
    applies a monotone residual line search over halved steps: the candidates
    1, 1/2, 1/4, 1/8 are compared and the best decrease taken; if none of
    them decreases the residual, halving continues (up to max_halvings in
    total) until one does. Returns (state, report); a non-converged report
    carries the failure reason instead of raising.
    """
    system = kkt.system_for(x0.mesh, spec, depth)
    x = system.state_to_vec(x0)
    level = x0.mesh.level

    def report(n, res, conv, damp, msg=""):
        return NewtonReport(n, res, conv, damp, msg, gamma, level)

    r = system.residual_vec(x, gamma)
    rnorm = float(np.linalg.norm(r))
    residuals = [rnorm]
    damping = []
    if not np.isfinite(rnorm):
        return (system.vec_to_state(x, gamma),
                report(0, residuals, False, damping,
                       "non-finite residual at the initial iterate"))

    for it in range(1, max_iterations + 1):
        if rnorm <= tol:
            return (system.vec_to_state(x, gamma),
                    report(it - 1, residuals, True, damping))
        J = system.jacobian_mat(x, gamma)
        try:
            d = spla.splu(J).solve(-r)
        except RuntimeError as exc:
            return (system.vec_to_state(x, gamma),
                    report(it - 1, residuals, False, damping,
                           f"singular Jacobian at iteration {it} "
                           f"(gamma={gamma:.6g}, level={level}): {exc}"))
        if not np.all(np.isfinite(d)):
            return (system.vec_to_state(x, gamma),
                    report(it - 1, residuals, False, damping,
                           f"non-finite Newton direction at iteration {it} "
                           f"(gamma={gamma:.6g}, level={level})"))

        best = None
        for halving in range(max_halvings + 1):
            x_try = x + 0.5 ** halving * d
            r_try = system.residual_vec(x_try, gamma)
            rnorm_try = float(np.linalg.norm(r_try))
            if np.isfinite(rnorm_try) and rnorm_try < rnorm \
                    and (best is None or rnorm_try < best[0]):
                best = (rnorm_try, x_try, r_try, halving)
            # compare the first few candidates, then stop at the first
            # decrease found
            if best is not None and halving >= 3:
                break
        if best is None:
            return (system.vec_to_state(x, gamma),
                    report(it - 1, residuals, False, damping,
                           f"damping stalled at iteration {it} "
                           f"(gamma={gamma:.6g}, level={level}, "
                           f"residual={rnorm:.3e})"))
        rnorm, x, r, halving = best
        residuals.append(rnorm)
        damping.append(halving)

    converged = rnorm <= tol
    msg = "" if converged else (
        f"no convergence after {max_iterations} iterations "
        f"(gamma={gamma:.6g}, level={level}, residual={rnorm:.3e})")
    return (system.vec_to_state(x, gamma),
            report(max_iterations, residuals, converged, damping, msg))


def prolong_state(state, prolongation):
    """Carry a state to the refined mesh.

    Piecewise constants are copied to the children, vertex values are
    interpolated linearly, and edge fluxes are prolonged by the natural
    inclusion of the coarse space: the coarse field's normal component is
    evaluated at each fine edge midpoint. The cached datum is prolonged the
    same way; the path driver replaces it with a fresh solve per level.
    """
    if state.mesh is not prolongation.coarse:
        raise ValueError("state does not live on the prolongation's "
                         "coarse mesh")
    fine = prolongation.fine
    if state.disc == "rt0":
        par = prolongation.parent
        y = state.y[par]
        q = state.q[par]
        z = state.z[par]
        mids = 0.5 * (fine.vertices[fine.edges[:, 0]]
                      + fine.vertices[fine.edges[:, 1]])
        host = par[fine.edge_tris[:, 0]]
        flux_y = np.einsum(
            "kd,kd->k",
            RT0Field(state.mesh, state.flux_y).at_points(host, mids),
            fine.edge_normals)
        flux_q = np.einsum(
            "kd,kd->k",
            RT0Field(state.mesh, state.flux_q).at_points(host, mids),
            fine.edge_normals)
        return kkt.OptState("rt0", fine, state.gamma, y, q, z,
                            flux_y, flux_q)

    tv = state.mesh.triangles[prolongation.vertex_tri]
    bary = prolongation.vertex_bary

    def interp(values):
        return np.einsum("vj,vj->v", bary, values[tv])

    return kkt.OptState("p1", fine, state.gamma, interp(state.y),
                        interp(state.q), interp(state.z))


def run_path(spec, cfg, depth=2):
    """Path-following driver: per level compute the datum, Newton-solve at
    the current gamma, then refine the mesh, scale gamma by 2**kappa and
    warm-start from the prolonged iterate.

    On a Newton failure at a refined level the driver optionally retries
    once from the same warm start with the more conservative increase
    2**(kappa/2); a failure that survives the retry ends the path and is
    recorded in the result.
    """
    kappa = cfg.resolved_kappa(spec.disc)
    mesh = build_uniform(cfg.level0)
    state = kkt.initial_state(mesh, spec, cfg.gamma0, depth)
    gamma = cfg.gamma0
    prev_gamma = None
    result = PathResult()

    for i in range(cfg.levels):
        t0 = time.perf_counter()
        warm = state
        sol, rep = newton_solve(warm, spec, gamma, cfg.tol,
                                cfg.max_iterations, cfg.max_halvings, depth)
        retried = False
        if not rep.converged and cfg.retry_conservative and i > 0:
            gamma_retry = prev_gamma * 2.0 ** (kappa / 2.0)
            sol2, rep2 = newton_solve(warm, spec, gamma_retry, cfg.tol,
                                      cfg.max_iterations, cfg.max_halvings,
                                      depth)
            if rep2.converged:
                gamma, sol, rep, retried = gamma_retry, sol2, rep2, True
        J = kkt.objective(sol, spec, depth) if rep.converged else float("nan")
        wall = time.perf_counter() - t0
        result.steps.append(PathStep(mesh.level, gamma, sol, rep, J, wall,
                                     retried))
        if not rep.converged:
            result.failed = True
            result.failure = rep.message
            break
        if i > 0 and cfg.stop_rel_change > 0:
            J_prev = result.steps[-2].objective
            if abs(J - J_prev) <= cfg.stop_rel_change * abs(J_prev):
                break
        if i == cfg.levels - 1:
            break
        fine, pro = refine(mesh)
        result.prolongations.append(pro)
        state = prolong_state(sol, pro)
        system = kkt.system_for(fine, spec, depth)
        state = kkt.OptState(spec.disc, fine, gamma, state.y, state.q,
                             system.z, state.flux_y, state.flux_q)
        prev_gamma = gamma
        gamma = gamma * 2.0 ** kappa
        mesh = fine
    return result
