"""Convergence studies, error protocols and plot-ready output files.

Errors are measured against the exact solution when the problem has one,
otherwise against a reference run declared in the config: a fine global
solve for curves (interpolated to the mesh nodes) or a fine self-solve for
surfaces on a nested grid.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from varietyfd.curve_fd.reference import locate_parameters, periodic_lagrange
from varietyfd.curve_fd.solve import CurveSolution, export_curve_solution_csv, solve_curve_problem
from varietyfd.curve_mesh.mesh import export_mesh_csv
from varietyfd.errors import ConfigError, NumericalError, VarietyError
from varietyfd.problem import VarietyProblem
from varietyfd.surface_fd.solve import (
    SurfaceSolution,
    dump_system_json,
    export_surface_solution_csv,
    solve_surface_problem,
)
from varietyfd.surface_mesh.mesh import export_adjacency_csv, export_surface_mesh_csv

REFERENCE_REFINE = 2
NEST_TOL = 1e-9


def atomic_write(path, write) -> Path:
    """Call ``write(tmp_path)`` and rename the result onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _write_json(path, data) -> Path:
    def w(tmp):
        with open(tmp, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return atomic_write(path, w)


# ---------------------------------------------------------------- solving

def solve(problem: VarietyProblem, N: int, method: str | None = None,
          stencil: int | None = None, refine: int = 0, **options):
    """Solve ``problem`` at resolution ``N`` with config defaults filled in."""
    d = problem.defaults
    if problem.is_curve:
        opts = {**d.get("options", {}), **options}
        return solve_curve_problem(problem, method or d.get("method", "local"), N,
                                   stencil or d.get("stencil", 3), refine=refine, **opts)
    if method not in (None, "local"):
        raise ConfigError("surface problems only support the local method")
    if stencil not in (None, 9):
        raise ConfigError("surface problems use the nine-point stencil")
    return solve_surface_problem(problem, N, **options)


_REFERENCES: dict[tuple, object] = {}


def reference_solution(problem: VarietyProblem):
    """The refined or self reference declared by the config (cached)."""
    ref = problem.reference
    if ref["kind"] == "exact":
        raise ConfigError(f"{problem.name}: reference is the exact solution")
    key = (problem.name, json.dumps(problem.raw, sort_keys=True))
    if key not in _REFERENCES:
        if problem.is_curve:
            if ref["kind"] != "refined":
                raise ConfigError("curve references must be 'refined'")
            _REFERENCES[key] = solve_curve_problem(
                problem, ref.get("method", "global"), ref.get("N", 20480),
                ref.get("stencil", 5), refine=REFERENCE_REFINE)
        else:
            _REFERENCES[key] = solve_surface_problem(problem, ref.get("N", 160))
    return _REFERENCES[key]


def describe_reference(problem: VarietyProblem, kind: str | None = None) -> str:
    ref = problem.reference
    kind = kind or ref["kind"]
    if kind == "exact":
        return "exact solution"
    if problem.is_curve:
        return (f"{ref.get('method', 'global')} {ref.get('stencil', 5)}-point solution, "
                f"N = {ref.get('N', 20480)}")
    return f"self-solve, N = {ref.get('N', 160)}"


def _curve_reference_values(sol: CurveSolution, ref: CurveSolution, problem) -> np.ndarray:
    gp = problem.global_param
    if ref.params is None or gp is None:
        raise NumericalError("curve references must come from the global parameterisation")
    if sol.method == "global" and sol.params is not None and len(ref.values) % sol.N == 0:
        return ref.values[:: len(ref.values) // sol.N]
    t = locate_parameters(gp, sol.nodes, sol.tangents)
    return periodic_lagrange(ref.values, gp.domain, t)


def _surface_reference_values(sol: SurfaceSolution, ref: SurfaceSolution) -> np.ndarray:
    d, j = cKDTree(ref.nodes).query(sol.nodes)
    scale = max(1.0, float(np.max(np.abs(ref.nodes))))
    if np.max(d) > NEST_TOL * scale:
        raise NumericalError(f"node matching failed: a coarse node is {np.max(d):.3g} from "
                             "every reference node (grids do not nest)")
    return ref.values[j]


def compute_linf_error(sol, reference="exact", problem: VarietyProblem | None = None) -> float:
    """Max over nodes (one entry per branch at singular points) of ``|u - u_ref|``.

    ``reference`` is ``"exact"``, ``"refined"`` (the config's reference run,
    which needs ``problem``) or a solution object on a nested or
    parameterised grid.
    """
    if isinstance(reference, str):
        if reference == "exact":
            if sol.exact is None:
                raise ConfigError(f"{sol.problem}: no exact solution available")
            return float(np.max(np.abs(sol.values - sol.exact)))
        if reference not in ("refined", "self"):
            raise ConfigError(f"unknown reference {reference!r}")
        if problem is None:
            raise ConfigError("a refined reference needs the problem")
        reference = reference_solution(problem)
    if isinstance(sol, SurfaceSolution):
        ref_vals = _surface_reference_values(sol, reference)
    else:
        if problem is None:
            raise ConfigError("a refined curve reference needs the problem")
        ref_vals = _curve_reference_values(sol, reference, problem)
    return float(np.max(np.abs(sol.values - ref_vals)))


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceRow:
    N: int
    error: float | None
    order: float | None = None
    nodes: int | None = None
    status: str = "ok"
    message: str = ""


@dataclass
class ConvergenceReport:
    problem: str
    method: str
    stencil: int
    reference: str
    rows: list[ConvergenceRow] = field(default_factory=list)

    @property
    def Ns(self) -> list[int]:
        return [r.N for r in self.rows]

    @property
    def errors(self) -> list[float | None]:
        return [r.error for r in self.rows]

    @property
    def orders(self) -> list[float | None]:
        return [r.order for r in self.rows]

    def format_table(self) -> str:
        head = (f"{self.problem}: {self.method}, {self.stencil}-point stencil, "
                f"reference: {self.reference}")
        lines = [head, f"{'N':>8} | {'L_inf Error':>12} | {'Order':>7}", "-" * 34]
        for r in self.rows:
            if r.status != "ok":
                lines.append(f"{r.N:>8} | {'failed':>12} | {'':>7}  {r.message}")
                continue
            order = "---" if r.order is None else f"{r.order:.3f}"
            lines.append(f"{r.N:>8} | {r.error:>12.3e} | {order:>7}")
        return "\n".join(lines)

    def write_csv(self, path) -> Path:
        def w(tmp):
            with open(tmp, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["N", "nodes", "linf_error", "order", "status", "message"])
                for r in self.rows:
                    wr.writerow([r.N, "" if r.nodes is None else r.nodes,
                                 "" if r.error is None else repr(r.error),
                                 "" if r.order is None else repr(r.order),
                                 r.status, r.message])
        return atomic_write(path, w)

    def to_dict(self) -> dict:
        return asdict(self)


def observed_order(e1: float, e2: float, N1: int, N2: int) -> float:
    """``log(e1 / e2) / log(N2 / N1)``; ``log2(e1 / e2)`` under doubling."""
    if N2 == 2 * N1:
        return float(np.log2(e1 / e2))
    return float(math.log(e1 / e2) / math.log(N2 / N1))


def run_convergence(problem: VarietyProblem, method: str | None = None, Ns=None,
                    stencil: int | None = None, reference: str | None = None,
                    **options) -> ConvergenceReport:
    """Errors and observed orders over ``Ns``; a failing N is recorded, not raised."""
    d = problem.defaults
    Ns = list(Ns or d.get("Ns", []))
    if not Ns:
        raise ConfigError(f"{problem.name}: no resolutions given")
    if problem.is_curve:
        method = method or d.get("method", "local")
        stencil = stencil or d.get("stencil", 3)
    else:
        method, stencil = "local", 9
    kind = reference or problem.reference["kind"]
    report = ConvergenceReport(problem.name, method, stencil, describe_reference(problem, kind))
    prev = None
    for N in Ns:
        try:
            sol = solve(problem, N, method, stencil, **options)
            err = compute_linf_error(sol, kind, problem)
        except VarietyError as exc:
            report.rows.append(ConvergenceRow(N, None, status="failed",
                                              message=f"{type(exc).__name__}: {exc}"))
            prev = None
            continue
        order = None
        if prev is not None and prev[1] > 0 and err > 0:
            order = observed_order(prev[1], err, prev[0], N)
        report.rows.append(ConvergenceRow(N, err, order, sol.N))
        prev = (N, err)
    return report


# ---------------------------------------------------------------- plot data

def emit_plot_data(sol, problem: VarietyProblem, out_dir, system_json: bool = False) -> dict:
    """Solution CSV, mesh CSV and a manifest JSON describing the run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = sol.meta.get("N", sol.N) if isinstance(sol, SurfaceSolution) else sol.N
    stem = f"{problem.name}_N{res}"
    files = {"solution": f"{stem}_solution.csv", "mesh": f"{stem}_mesh.csv"}
    manifest = {"problem": problem.name, "description": problem.description,
                "dimension": problem.dimension, "unknowns": int(sol.N),
                "backward_error": float(sol.residual),
                "linf_error_exact": sol.linf_error, "config": problem.raw}
    if isinstance(sol, SurfaceSolution):
        atomic_write(out / files["solution"], lambda p: export_surface_solution_csv(sol, p))
        atomic_write(out / files["mesh"], lambda p: export_surface_mesh_csv(sol.mesh, p))
        files["adjacency"] = f"{stem}_adjacency.csv"
        atomic_write(out / files["adjacency"], lambda p: export_adjacency_csv(sol.mesh, p))
        if system_json and sol.system is not None:
            files["system"] = f"{stem}_system.json"
            atomic_write(out / files["system"], lambda p: dump_system_json(sol.system, p))
        manifest.update(method="local", stencil=9, N=sol.meta.get("N"),
                        spacing_ratio=sol.meta.get("spacing_ratio"))
    else:
        atomic_write(out / files["solution"], lambda p: export_curve_solution_csv(sol, p))
        if sol.mesh is not None:
            atomic_write(out / files["mesh"], lambda p: export_mesh_csv(sol.mesh, p))
        else:
            atomic_write(out / files["mesh"], lambda p: _global_nodes_csv(sol, p))
        manifest.update(method=sol.method, stencil=sol.stencil, N=sol.N,
                        singular_values={str(list(k)): v for k, v in sol.singular_values().items()})
    manifest["files"] = files
    _write_json(out / f"{stem}_manifest.json", manifest)
    return {k: out / v for k, v in files.items()} | {"manifest": out / f"{stem}_manifest.json"}


def _global_nodes_csv(sol: CurveSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "t", "branch_id"])
        for i in range(sol.N):
            w.writerow([i, repr(float(sol.nodes[i, 0])), repr(float(sol.nodes[i, 1])),
                        repr(float(sol.params[i])), int(sol.branch_ids[i])])
