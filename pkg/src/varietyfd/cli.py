"""Command line entry point: ``varietyfd {mesh,solve,converge} --config ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from varietyfd.errors import ConfigError, NumericalError
from varietyfd.problem import bundled_configs, load_problem

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("varietyfd")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varietyfd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_n=True):
        sp.add_argument("--config", required=True,
                        help="JSON config path or bundled name (" + ", ".join(bundled_configs()) + ")")
        if need_n:
            sp.add_argument("--n", type=int, default=None, help="resolution (nodes, or N for N^2 on surfaces)")
        sp.add_argument("--method", choices=["global", "local"], default=None)
        sp.add_argument("--stencil", type=int, default=None)
        sp.add_argument("--out", default="out", help="output directory")

    common(sub.add_parser("mesh", help="build and export the mesh"))
    s = sub.add_parser("solve", help="solve once and write plot-ready files")
    common(s)
    s.add_argument("--reference", choices=["exact", "refined"], default=None)
    s.add_argument("--dump-system", action="store_true", help="also write the sparse system as JSON")
    c = sub.add_parser("converge", help="convergence table over several resolutions")
    common(c, need_n=False)
    c.add_argument("--ns", default=None, help="comma separated resolutions (default: config)")
    c.add_argument("--reference", choices=["exact", "refined"], default=None)
    return p


def _resolution(problem, n):
    if n is not None:
        return n
    Ns = problem.defaults.get("Ns")
    if not Ns:
        raise ConfigError("give --n (the config has no default resolutions)")
    return Ns[0]


def _reference_kind(problem, requested):
    if requested is None:
        return problem.reference["kind"]
    if requested == "refined" and problem.reference["kind"] == "exact":
        raise ConfigError(f"{problem.name} declares no refined reference")
    if requested == "refined":
        return problem.reference["kind"]
    return requested


def cmd_mesh(args) -> int:
    from varietyfd.curve_fd.solve import problem_mesh
    from varietyfd.curve_mesh.mesh import export_mesh_csv
    from varietyfd.harness import atomic_write
    from varietyfd.surface_fd.solve import problem_surface_mesh
    from varietyfd.surface_mesh.mesh import export_adjacency_csv, export_surface_mesh_csv

    problem = load_problem(args.config)
    N = _resolution(problem, args.n)
    out = Path(args.out)
    if problem.is_curve:
        mesh = problem_mesh(problem, N)
        path = atomic_write(out / f"{problem.name}_N{N}_mesh.csv", lambda p: export_mesh_csv(mesh, p))
        print(f"{problem.name}: {mesh.N} nodes, gap {mesh.arclength_gap:.6g}, "
              f"{len(mesh.singular_nodes)} singular -> {path}")
    else:
        mesh = problem_surface_mesh(problem, N)
        path = atomic_write(out / f"{problem.name}_N{N}_mesh.csv",
                            lambda p: export_surface_mesh_csv(mesh, p))
        atomic_write(out / f"{problem.name}_N{N}_adjacency.csv",
                     lambda p: export_adjacency_csv(mesh, p))
        print(f"{problem.name}: {mesh.N} nodes, spacing ratio {mesh.stats['ratio']:.3g}, "
              f"{len(mesh.singular_nodes)} singular -> {path}")
    return EXIT_OK


def cmd_solve(args) -> int:
    from varietyfd.harness import compute_linf_error, emit_plot_data, solve

    problem = load_problem(args.config)
    N = _resolution(problem, args.n)
    sol = solve(problem, N, args.method, args.stencil)
    files = emit_plot_data(sol, problem, args.out, system_json=args.dump_system)
    print(f"{problem.name}: N = {N}, {sol.N} unknowns, backward error {sol.residual:.2e}")
    kind = _reference_kind(problem, args.reference)
    if kind == "exact" and sol.exact is not None or kind != "exact":
        err = compute_linf_error(sol, kind, problem)
        print(f"L_inf error vs {kind} reference: {err:.4e}")
    for k, v in files.items():
        print(f"  {k}: {v}")
    return EXIT_OK


def cmd_converge(args) -> int:
    from varietyfd.harness import run_convergence

    problem = load_problem(args.config)
    Ns = None
    if args.ns:
        try:
            Ns = [int(v) for v in args.ns.split(",")]
        except ValueError:
            raise ConfigError(f"--ns must be comma separated integers, got {args.ns!r}") from None
    kind = _reference_kind(problem, args.reference)
    report = run_convergence(problem, args.method, Ns, args.stencil, reference=kind)
    print(report.format_table())
    path = report.write_csv(Path(args.out) / f"{problem.name}_{report.method}"
                                             f"{report.stencil}_convergence.csv")
    print(f"-> {path}")
    return EXIT_NUMERICAL if any(r.status != "ok" for r in report.rows) else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"mesh": cmd_mesh, "solve": cmd_solve, "converge": cmd_converge}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
