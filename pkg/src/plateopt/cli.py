"""Benchmark command line: FEM convergence studies, single solves, path
runs, table reproduction and gamma sweeps."""

import argparse
import os
import sys

from . import harness, kkt, solver
from .mesh import build_uniform
from .problems import Example1, example1_spec, example2_spec


def _parse_levels(text):
    """Level range `a..b` or a single level."""
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(text)]


def _parse_gammas(text):
    """Gamma list: `a:b:decade`, `a:b:x<factor>`, or comma-separated."""
    if ":" in text:
        a, b, step = text.split(":")
        lo, hi = float(a), float(b)
        if step == "decade":
            factor = 10.0
        elif step.startswith("x"):
            factor = float(step[1:])
        else:
            raise ValueError(f"unknown gamma step {step!r}")
        out = [lo]
        while out[-1] * factor <= hi * 1.0000001:
            out.append(out[-1] * factor)
        return out
    return [float(t) for t in text.split(",")]


def _problem(name, disc):
    if name == "ex1":
        return example1_spec(disc)
    if name == "ex2":
        return example2_spec(disc)
    raise ValueError(f"unknown problem {name!r}")


def _load_config(path):
    values = {}
    with open(path) as fh:
        for ln in fh:
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            key, _, val = ln.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_poisson_conv(args):
    table = harness.poisson_convergence(args.disc, _parse_levels(args.levels))
    print(harness.format_table(table))
    if args.out:
        path = os.path.join(_outdir(args), f"poisson_{args.disc}.csv")
        table.write(path)
        print(f"wrote {path}")
    return 0


def cmd_solve(args):
    spec = _problem(args.problem, args.disc)
    mesh = build_uniform(args.level)
    state = kkt.initial_state(mesh, spec, args.gamma)
    state, rep = solver.newton_solve(state, spec, args.gamma, args.tol)
    print(f"level={args.level} gamma={args.gamma:.5e} "
          f"iterations={rep.iterations} converged={rep.converged} "
          f"residual={rep.residuals[-1]:.5e}")
    if not rep.converged:
        print(f"failure: {rep.message}")
        return 1
    print(f"objective={kkt.objective(state, spec):.5e}")
    if args.out:
        prefix = f"{args.problem}_{args.disc}_k{args.level}"
        for p in harness.export_state(state, spec, _outdir(args), prefix):
            print(f"wrote {p}")
    return 0


def cmd_path(args):
    spec = _problem(args.problem, args.disc)
    cfg = solver.PathConfig(
        level0=args.level0, gamma0=args.gamma0, levels=args.levels,
        kappa=args.kappa, tol=args.tol,
        retry_conservative=args.retry_conservative,
        stop_rel_change=args.stop_rel_change)
    result = solver.run_path(spec, cfg)
    print(f"{'level':>5} {'gamma':>12} {'iters':>5} {'conv':>5} "
          f"{'objective':>13} {'residual':>12}")
    for s in result.steps:
        print(f"{s.level:>5} {s.gamma:>12.5e} {s.report.iterations:>5} "
              f"{str(s.report.converged):>5} {s.objective:>13.5e} "
              f"{s.report.residuals[-1]:>12.5e}")
    if result.failed:
        print(f"path failed: {result.failure}")
    if args.out and result.steps:
        last = result.converged_steps()
        if last:
            prefix = f"{args.problem}_{args.disc}_path_k{last[-1].level}"
            for p in harness.export_state(last[-1].state, spec,
                                          _outdir(args), prefix):
                print(f"wrote {p}")
    return 1 if result.failed else 0


def cmd_table(args):
    spec = _problem(args.problem, args.disc)
    cfg = solver.PathConfig(
        level0=args.level0, gamma0=args.gamma0, levels=args.levels,
        kappa=args.kappa, tol=args.tol,
        retry_conservative=args.retry_conservative)
    exact = Example1 if args.problem == "ex1" else None
    ref_level = None if exact is not None else args.level0 + args.levels - 1
    table = harness.run_table(spec, cfg, exact=exact,
                              reference_level=ref_level)
    print(harness.format_table(table))
    if args.out:
        path = os.path.join(_outdir(args),
                            f"table_{args.problem}_{args.disc}.csv")
        table.write(path)
        print(f"wrote {path}")
    return 1 if table.path.failed else 0


def cmd_sweep(args):
    spec = _problem(args.problem, args.disc)
    gammas = _parse_gammas(args.gammas)
    exact = Example1 if args.problem == "ex1" else None
    records = harness.gamma_sweep(spec, args.level, gammas, exact=exact,
                                  tol=args.tol)
    print(f"{'gamma':>12} {'err_linf_y':>12} {'err_l2_l':>12} "
          f"{'iters':>5} {'conv':>5}")
    for r in records:
        ey = r.errors.get("linf_y")
        el = r.errors.get("l2_l")
        print(f"{r.gamma:>12.5e} "
              f"{'--' if ey is None else format(ey, '12.5e'):>12} "
              f"{'--' if el is None else format(el, '12.5e'):>12} "
              f"{r.newton_iters:>5} {str(r.converged):>5}")
    try:
        gs = [r.gamma for r in records]
        sy = harness.presaturation_slope(gs, [r.errors.get("linf_y")
                                              for r in records])
        sl = harness.presaturation_slope(gs, [r.errors.get("l2_l")
                                              for r in records])
        print(f"pre-saturation slopes: state {sy:.3f}, control {sl:.3f}")
    except ValueError:
        pass
    if args.out:
        path = os.path.join(_outdir(args),
                            f"sweep_{args.problem}_{args.disc}"
                            f"_k{args.level}.csv")
        with open(path, "w") as fh:
            fh.write(harness.sweep_csv(records))
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plateopt",
        description="Optimal plate-thickness design benchmarks (dual "
                    "formulation, penalized state constraints, semismooth "
                    "Newton path following).")
    parser.add_argument("--config", help="key=value file with defaults for "
                                         "the chosen subcommand")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap (environment variables such "
                             "as OMP_NUM_THREADS take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--tol", type=float, default=1e-3,
                       help="Newton tolerance on the residual norm")

    p = sub.add_parser("poisson-conv",
                       help="manufactured-solution FEM convergence table")
    p.add_argument("--disc", choices=("rt0", "p1"), required=True)
    p.add_argument("--levels", default="4..7", help="level range a..b")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_poisson_conv)

    p = sub.add_parser("solve", help="solve one regularized subproblem")
    p.add_argument("--problem", choices=("ex1", "ex2"), required=True)
    p.add_argument("--disc", choices=("rt0", "p1"), required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    common(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("path", help="gamma-h path-following run")
    p.add_argument("--problem", choices=("ex1", "ex2"), required=True)
    p.add_argument("--disc", choices=("rt0", "p1"), required=True)
    p.add_argument("--level0", type=int, required=True)
    p.add_argument("--gamma0", type=float, required=True)
    p.add_argument("--kappa", type=float, default=None,
                   help="gamma growth exponent (default 2 for rt0, 4 for p1)")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--retry-conservative", action="store_true", default=False)
    p.add_argument("--stop-rel-change", type=float, default=0.0)
    common(p)
    p.set_defaults(fn=cmd_path)

    p = sub.add_parser("table", help="error/EOC table along a path run")
    p.add_argument("--problem", choices=("ex1", "ex2"), required=True)
    p.add_argument("--disc", choices=("rt0", "p1"), required=True)
    p.add_argument("--level0", type=int, default=4)
    p.add_argument("--gamma0", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--retry-conservative", action="store_true", default=False)
    common(p)
    p.set_defaults(fn=cmd_table)

    p = sub.add_parser("sweep", help="gamma sweep at fixed mesh")
    p.add_argument("--problem", choices=("ex1", "ex2"), required=True)
    p.add_argument("--disc", choices=("rt0", "p1"), required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--gammas", default="1e2:1e8:decade")
    common(p)
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    # apply config-file values as subcommand defaults; explicit flags win
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        values = _load_config(cfg_path)
        for action in parser._subparsers._group_actions:
            for name, sp in getattr(action, "choices", {}).items():
                known = {a.dest for a in sp._actions}
                casts = {a.dest: a.type for a in sp._actions}
                overrides = {}
                for key, val in values.items():
                    if key in known:
                        cast = casts.get(key)
                        overrides[key] = cast(val) if cast else val
                sp.set_defaults(**overrides)

    args = parser.parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    if args.command == "table" and args.gamma0 is None:
        args.gamma0 = 400.0 if args.disc == "rt0" else 16.0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
