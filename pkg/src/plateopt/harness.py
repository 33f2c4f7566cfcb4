"""Experiment orchestration: error/EOC tables against exact or reference
solutions, gamma sweeps at fixed mesh, and CSV/VTK exports."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kkt, solver
from .mesh import build_uniform
from .poisson_p1 import P1Field, p1_norms, solve_poisson_p1
from .poisson_rt0 import rt0_norms, solve_poisson_rt0
from .problems import manufactured_poisson
from .quadrature import gauss_points, subdivision_gauss_bary

__all__ = ["ErrorRecord", "EocTable", "compute_eoc", "run_table",
           "gamma_sweep", "presaturation_slope", "poisson_convergence",
           "write_vtk", "export_state", "control_boundary_rt0",
           "control_boundary_p1", "write_segments_csv", "format_table"]


@dataclass
class ErrorRecord:
    """One row of an error table: mesh level, parameters, and named error
    values, plus solver bookkeeping."""

    level: int
    h: float
    gamma: float
    disc: str
    errors: dict = field(default_factory=dict)
    newton_iters: int = 0
    wall_s: float = 0.0
    converged: bool = True


# canonical column order and EOC column names for CSV output
_EOC_NAMES = {"linf_y": "eoc_y", "l2_l": "eoc_l"}
_COLUMN_ORDER = ["linf_y", "l2_l", "h1_y", "l2_y", "h1", "l2_flux"]


def compute_eoc(errors):
    """Experimental orders of convergence from (h, e) pairs.

    Returns n-1 values log(e_i/e_{i+1}) / log(h_i/h_{i+1}); h must be
    strictly decreasing and all errors positive.
    """
    hs = [h for h, _ in errors]
    es = [e for _, e in errors]
    if any(e <= 0 for e in es):
        raise ValueError("EOC needs positive error values")
    if any(h1 <= h2 for h1, h2 in zip(hs, hs[1:])):
        raise ValueError("EOC needs strictly decreasing mesh sizes")
    return [math.log(e0 / e1) / math.log(h0 / h1)
            for (h0, e0), (h1, e1) in zip(errors, errors[1:])]


class EocTable:
    """Ordered error records with pairwise EOC columns."""

    def __init__(self, records, note=""):
        self.records = list(records)
        self.note = note
        self.path = None
        tags = []
        for r in self.records:
            for t in r.errors:
                if t not in tags:
                    tags.append(t)
        self.tags = [t for t in _COLUMN_ORDER if t in tags] \
            + [t for t in tags if t not in _COLUMN_ORDER]
        self.eoc = {}
        for t in self.tags:
            vals = [None]
            for a, b in zip(self.records, self.records[1:]):
                ea, eb = a.errors.get(t), b.errors.get(t)
                if ea and eb and ea > 0 and eb > 0 and a.h > b.h:
                    vals.append(math.log(ea / eb) / math.log(a.h / b.h))
                else:
                    vals.append(None)
            self.eoc[t] = vals

    def column(self, tag):
        return [r.errors.get(tag) for r in self.records]

    def record_for_level(self, level):
        for r in self.records:
            if r.level == level:
                return r
        raise KeyError(f"no record for level {level}")

    def to_csv(self):
        head = ["level", "h", "gamma"]
        for t in self.tags:
            head += [f"err_{t}", _EOC_NAMES.get(t, f"eoc_{t}")]
        head += ["newton_iters", "wall_s"]
        lines = [",".join(head)]
        for i, r in enumerate(self.records):
            row = [str(r.level), repr(r.h), repr(r.gamma)]
            for t in self.tags:
                e = r.errors.get(t)
                row.append("" if e is None else repr(e))
                q = self.eoc[t][i]
                row.append("" if q is None else repr(q))
            row += [str(r.newton_iters), repr(r.wall_s)]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = lines[0].split(",")
        tags = [c[4:] for c in head if c.startswith("err_")]
        records = []
        for ln in lines[1:]:
            parts = ln.split(",")
            row = dict(zip(head, parts))
            errors = {t: float(row[f"err_{t}"]) for t in tags
                      if row[f"err_{t}"] != ""}
            records.append(ErrorRecord(
                level=int(row["level"]), h=float(row["h"]),
                gamma=float(row["gamma"]), disc="",
                errors=errors, newton_iters=int(row["newton_iters"]),
                wall_s=float(row["wall_s"])))
        return cls(records)


def format_table(table):
    """Console rendering with 6 significant digits."""
    head = ["level", "h", "gamma"]
    for t in table.tags:
        head += [f"err_{t}", _EOC_NAMES.get(t, f"eoc_{t}")]
    head += ["iters", "wall_s"]
    rows = [head]
    for i, r in enumerate(table.records):
        row = [str(r.level), f"{r.h:.5e}", f"{r.gamma:.5e}"]
        for t in table.tags:
            e = r.errors.get(t)
            row.append("--" if e is None else f"{e:.5e}")
            q = table.eoc[t][i]
            row.append("--" if q is None else f"{q:.2f}")
        row += [str(r.newton_iters), f"{r.wall_s:.2f}"]
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
    out = []
    for r in rows:
        out.append("  ".join(s.rjust(w) for s, w in zip(r, widths)))
    if table.note:
        out.append(f"# {table.note}")
    return "\n".join(out)


# ----------------------------------------------------------------------
# error evaluation


def _control_l2_rt0(state, spec, l_exact):
    mesh = state.mesh
    T = mesh.num_triangles
    xy = gauss_points(mesh).reshape(-1, 2)
    le = np.asarray(l_exact(xy)).reshape(T, 3)
    l_h = kkt.recover_control(state.q_field(), state.z_field(), spec).values
    w = mesh.areas[:, None] / 3.0
    return float(np.sqrt((w * (le - l_h[:, None]) ** 2).sum()))


def _subdivided_points(mesh, depth):
    GB, _ = subdivision_gauss_bary(depth)
    PB = GB.reshape(-1, 3)
    w = mesh.areas[:, None] / PB.shape[0]
    return PB, w


def _control_l2_p1(state, spec, l_exact, depth=2):
    """L2 control error for the implicit control, by subdivided quadrature
    (resolves the clamp boundaries inside triangles)."""
    mesh = state.mesh
    PB, w = _subdivided_points(mesh, depth)
    tv = mesh.triangles
    q = state.q[tv] @ PB.T
    z = state.z[tv] @ PB.T
    l_h = kkt._project(3.0 * q * z, spec)
    corners = mesh.vertices[tv]
    xy = np.einsum("pj,tjd->tpd", PB, corners).reshape(-1, 2)
    le = np.asarray(l_exact(xy)).reshape(l_h.shape)
    return float(np.sqrt((w * (le - l_h) ** 2).sum()))


def exact_errors(state, spec, exact, depth=2):
    """Error entries of a state against an exact solution object exposing
    y(xy), grad_y(xy) and l(xy)."""
    if spec.disc == "rt0":
        _, _, linf = rt0_norms(state.y_field(), None, exact.y)
        return {"linf_y": linf,
                "l2_l": _control_l2_rt0(state, spec, exact.l)}
    _, h1, linf = p1_norms(state.y_field(), exact.y, exact.grad_y)
    return {"linf_y": linf, "h1_y": h1,
            "l2_l": _control_l2_p1(state, spec, exact.l, depth)}


def reference_errors(state, spec, chain, ref_state, depth=2):
    """Error entries of a coarse state against a reference state on a finer
    mesh of the same family; the coarse fields are carried to the reference
    mesh through the prolongation chain (never the reverse)."""
    for pro in chain:
        state = solver.prolong_state(state, pro)
    mesh = ref_state.mesh
    if spec.disc == "rt0":
        linf = float(np.abs(state.y - ref_state.y).max())
        lc = kkt._project(3.0 * state.q * state.z, spec)
        lr = kkt._project(3.0 * ref_state.q * ref_state.z, spec)
        l2 = float(np.sqrt(((lc - lr) ** 2 * mesh.areas).sum()))
        return {"linf_y": linf, "l2_l": l2}
    dy = state.y - ref_state.y
    linf = float(np.abs(dy).max())
    _, h1, _ = p1_norms(P1Field(mesh, dy), lambda xy: 0.0,
                        lambda xy: np.zeros((len(xy), 2)))
    PB, w = _subdivided_points(mesh, depth)
    tv = mesh.triangles
    lc = kkt._project(3.0 * (state.q[tv] @ PB.T)
                      * (state.z[tv] @ PB.T), spec)
    lr = kkt._project(3.0 * (ref_state.q[tv] @ PB.T)
                      * (ref_state.z[tv] @ PB.T), spec)
    l2 = float(np.sqrt((w * (lc - lr) ** 2).sum()))
    return {"linf_y": linf, "h1_y": h1, "l2_l": l2}


def run_table(spec, cfg, exact=None, reference_level=None, depth=2):
    """Path-following run tabulated as an EOC table.

    With `exact` given, every converged level is compared against it. Without
    it the run is self-convergent: the finest converged level (which must
    equal `reference_level` when given) serves as the reference and all
    earlier levels are compared to it. Solver failures leave a partial table
    with the failure recorded in the note.
    """
    result = solver.run_path(spec, cfg, depth)
    records = []
    note = ""
    if result.failed:
        note = f"path failed: {result.failure}"
    steps = result.converged_steps()
    if exact is not None:
        for s in steps:
            errs = exact_errors(s.state, spec, exact, depth)
            records.append(ErrorRecord(s.level, s.state.mesh.h, s.gamma,
                                       spec.disc, errs, s.report.iterations,
                                       s.wall_s))
    elif steps:
        ref = steps[-1]
        if reference_level is not None and ref.level != reference_level:
            note = (note + f" no converged reference at level "
                    f"{reference_level}").strip()
        for i, s in enumerate(result.steps):
            if s is ref or not s.report.converged:
                continue
            chain = result.prolongations[i:]
            errs = reference_errors(s.state, spec, chain, ref.state, depth)
            records.append(ErrorRecord(s.level, s.state.mesh.h, s.gamma,
                                       spec.disc, errs, s.report.iterations,
                                       s.wall_s))
    table = EocTable(records, note)
    table.path = result
    return table


def gamma_sweep(spec, level, gammas, exact=None, tol=1e-6,
                max_iterations=50, bisect_depth=6, depth=2):
    """Solve the regularized problem for each gamma on a fixed mesh,
    warm-starting from the previous solution.

    On a Newton failure the solve is retried through recursive geometric
    bisection of the gamma step (up to `bisect_depth` splits); a failure
    that survives is recorded and the sweep continues. Errors are measured
    against `exact` when given, otherwise against the largest-gamma
    converged solution of the sweep itself (regularization error).
    """
    gammas = list(gammas)
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma values must be increasing")
    mesh = build_uniform(level)
    state = kkt.initial_state(mesh, spec, gammas[0], depth)

    def advance(st, target, budget):
        sol, rep = solver.newton_solve(st, spec, target, tol,
                                       max_iterations, depth=depth)
        if rep.converged or budget <= 0:
            return sol, rep
        mid = math.sqrt(st.gamma * target)
        if not mid < target:
            return sol, rep
        half, rep_half = advance(st, mid, budget - 1)
        if not rep_half.converged:
            return sol, rep
        return advance(half, target, budget - 1)

    outcomes = []
    for g in gammas:
        t0 = time.perf_counter()
        sol, rep = advance(state, g, bisect_depth)
        wall = time.perf_counter() - t0
        if rep.converged:
            state = sol
        outcomes.append((g, sol if rep.converged else None, rep, wall))

    reference = None
    if exact is None:
        for g, sol, rep, _ in reversed(outcomes):
            if sol is not None:
                reference = sol
                break

    records = []
    for g, sol, rep, wall in outcomes:
        errs = {}
        if sol is not None:
            if exact is not None:
                errs = exact_errors(sol, spec, exact, depth)
            elif reference is not None and sol is not reference:
                if spec.disc == "rt0":
                    errs = {"linf_y": float(np.abs(sol.y
                                                   - reference.y).max()),
                            "l2_l": float(np.sqrt(
                                ((kkt._project(3 * sol.q * sol.z, spec)
                                  - kkt._project(3 * reference.q
                                                 * reference.z, spec)) ** 2
                                 * mesh.areas).sum()))}
                else:
                    errs = reference_errors(sol, spec, [], reference, depth)
        records.append(ErrorRecord(level, mesh.h, g, spec.disc, errs,
                                   rep.iterations, wall, sol is not None))
    return records


def presaturation_slope(gammas, errors, tag=None):
    """Log-log slope of the regularization component of a sweep.

    The smallest error in the sweep is taken as the saturation floor; the
    slope is a least-squares fit of log10(error - floor) against log10(gamma)
    over the leading entries that still carry at least 5% of the largest
    excess (i.e. before saturation sets in).
    """
    gs, es = [], []
    for g, e in zip(gammas, errors):
        if e is not None and np.isfinite(e):
            gs.append(g)
            es.append(e)
    if len(es) < 3:
        raise ValueError("need at least 3 converged sweep points")
    es = np.asarray(es)
    gs = np.asarray(gs)
    excess = es - es.min()
    keep = excess >= 0.05 * excess.max()
    if keep.sum() < 2:
        keep[np.argsort(excess)[-2:]] = True
    A = np.vstack([np.log10(gs[keep]), np.ones(int(keep.sum()))]).T
    sol, *_ = np.linalg.lstsq(A, np.log10(excess[keep]), rcond=None)
    return float(sol[0])


def sweep_csv(records):
    head = "level,h,gamma,err_linf_y,err_l2_l,newton_iters,converged,wall_s"
    lines = [head]
    for r in records:
        ey = r.errors.get("linf_y")
        el = r.errors.get("l2_l")
        lines.append(",".join([
            str(r.level), repr(r.h), repr(r.gamma),
            "" if ey is None else repr(ey),
            "" if el is None else repr(el),
            str(r.newton_iters), str(int(r.converged)), repr(r.wall_s)]))
    return "\n".join(lines) + "\n"


def poisson_convergence(disc, levels):
    """EOC table for the manufactured Poisson problem."""
    g, y, grad = manufactured_poisson()
    records = []
    for k in levels:
        mesh = build_uniform(k)
        t0 = time.perf_counter()
        if disc == "rt0":
            yh, vh = solve_poisson_rt0(mesh, g)
            l2, l2f, linf = rt0_norms(yh, vh, y, grad)
            errs = {"l2_y": l2, "l2_flux": l2f, "linf_y": linf}
        else:
            sol = solve_poisson_p1(mesh, g)
            l2, h1, linf = p1_norms(sol, y, grad)
            errs = {"l2_y": l2, "h1_y": h1, "linf_y": linf}
        records.append(ErrorRecord(k, mesh.h, 0.0, disc, errs,
                                   0, time.perf_counter() - t0))
    return EocTable(records)


# ----------------------------------------------------------------------
# file output


def write_vtk(path, mesh, point_data=None, cell_data=None, cell_vectors=None):
    """Legacy ASCII VTK export of a triangle mesh with named fields."""
    V, T = mesh.num_vertices, mesh.num_triangles
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write("plateopt fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {V} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.12g} {y:.12g} 0\n")
        fh.write(f"CELLS {T} {4 * T}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {T}\n")
        fh.write("5\n" * T)
        if point_data:
            fh.write(f"POINT_DATA {V}\n")
            for name, vals in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in np.asarray(vals):
                    fh.write(f"{v:.12g}\n")
        if cell_data or cell_vectors:
            fh.write(f"CELL_DATA {T}\n")
            for name, vals in (cell_data or {}).items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in np.asarray(vals):
                    fh.write(f"{v:.12g}\n")
            for name, vals in (cell_vectors or {}).items():
                fh.write(f"VECTORS {name} double\n")
                for vx, vy in np.asarray(vals):
                    fh.write(f"{vx:.12g} {vy:.12g} 0\n")


def control_boundary_rt0(mesh, labels, code):
    """Boundaries of the clamped set with the given code: interior mesh
    edges whose two neighbours disagree about membership, as segments
    shaped (n, 2, 2)."""
    et = mesh.edge_tris
    inner = ~mesh.boundary_edge
    a = labels[et[inner, 0]] == code
    b = labels[et[inner, 1]] == code
    sel = mesh.edges[inner][a != b]
    return np.stack([mesh.vertices[sel[:, 0]], mesh.vertices[sel[:, 1]]],
                    axis=1)


def control_boundary_p1(mesh, q_values, z_values, threshold, depth=3):
    """Level-set 3 q z = threshold of the piecewise-quadratic product,
    sampled by marching over 4**depth subtriangles per triangle."""
    from .quadrature import subdivide_bary
    sub = subdivide_bary(depth)                            # (S, 3, 3)
    tv = mesh.triangles
    g = 3.0 * q_values[tv] * z_values[tv]                  # (T, 3) nodal
    segs = []
    corners = mesh.vertices[tv]                            # (T, 3, 2)
    # values and positions of subtriangle corners, per triangle
    vals = np.einsum("scb,tb->tsc", sub, g) - threshold    # (T, S, 3)
    pos = np.einsum("scb,tbd->tscd", sub, corners)         # (T, S, 3, 2)
    for t, s in zip(*np.nonzero((vals.min(axis=2) < 0)
                                & (vals.max(axis=2) > 0))):
        v = vals[t, s]
        p = pos[t, s]
        pts = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if (v[i] < 0) != (v[j] < 0):
                w = v[i] / (v[i] - v[j])
                pts.append(p[i] + w * (p[j] - p[i]))
        if len(pts) == 2:
            segs.append(pts)
    return np.asarray(segs).reshape(-1, 2, 2)


def write_segments_csv(path, segments):
    with open(path, "w") as fh:
        fh.write("x0,y0,x1,y1\n")
        for (x0, y0), (x1, y1) in segments:
            fh.write(f"{x0!r},{y0!r},{x1!r},{y1!r}\n")


def export_state(state, spec, outdir, prefix, sample_depth=2):
    """Write solution fields and active-set boundaries for one state.

    Produces `<prefix>_fields.vtk` with state/adjoint/datum (and control and
    thickness for the mixed case), `<prefix>_control.vtk` with the control
    sampled on a refinement for the P1 case, and the clamp boundaries
    `<prefix>_active_lower.csv` / `<prefix>_active_upper.csv`.
    """
    import os
    mesh = state.mesh
    paths = []
    if spec.disc == "rt0":
        l = kkt.recover_control(state.q_field(), state.z_field(), spec)
        u = kkt.recover_thickness(l, spec)
        f = os.path.join(outdir, f"{prefix}_fields.vtk")
        write_vtk(f, mesh, cell_data={"y": state.y, "q": state.q,
                                      "z": state.z, "l": l.values,
                                      "u": u.values})
        paths.append(f)
        labels = kkt.active_sets(state, spec).control
        for code, name in ((kkt.LOWER, "lower"), (kkt.UPPER, "upper")):
            segs = control_boundary_rt0(mesh, labels, code)
            f = os.path.join(outdir, f"{prefix}_active_{name}.csv")
            write_segments_csv(f, segs)
            paths.append(f)
    else:
        f = os.path.join(outdir, f"{prefix}_fields.vtk")
        write_vtk(f, mesh, point_data={"y": state.y, "q": state.q,
                                       "z": state.z})
        paths.append(f)
        ctrl = kkt.recover_control(state.q_field(), state.z_field(), spec)
        fine, l0 = ctrl.sample_p0(sample_depth)
        u0 = kkt.recover_thickness(l0, spec)
        f = os.path.join(outdir, f"{prefix}_control.vtk")
        write_vtk(f, fine, cell_data={"l": l0.values, "u": u0.values})
        paths.append(f)
        for thr, name in ((spec.proj_hi, "lower"), (spec.proj_lo, "upper")):
            segs = control_boundary_p1(mesh, state.q, state.z, thr)
            f = os.path.join(outdir, f"{prefix}_active_{name}.csv")
            write_segments_csv(f, segs)
            paths.append(f)
    return paths
