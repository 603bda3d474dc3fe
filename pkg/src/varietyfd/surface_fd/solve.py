"""End-to-end surface solves and their file outputs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from varietyfd.curve_fd.global_scheme import eval_field
from varietyfd.curve_fd.system import DiscreteSystem, solve_system
from varietyfd.errors import ConfigError
from varietyfd.problem import VarietyProblem
from varietyfd.surface_fd.assemble import assemble_surface
from varietyfd.surface_mesh.mesh import SurfaceMesh, build_surface_mesh

SURFACE_TOL = 1e-10


@dataclass
class SurfaceSolution:
    problem: str
    nodes: np.ndarray
    values: np.ndarray
    residual: float
    mesh: SurfaceMesh
    exact: np.ndarray | None = None
    system: DiscreteSystem | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.values)

    @property
    def abs_error(self) -> np.ndarray | None:
        return None if self.exact is None else np.abs(self.values - self.exact)

    @property
    def linf_error(self) -> float | None:
        e = self.abs_error
        return None if e is None else float(np.max(e))


def solve_sparse(sys: DiscreteSystem, tol: float = SURFACE_TOL):
    """Sparse LU with partial pivoting; backward error at most ``tol``."""
    return solve_system(sys, tol=tol)


def problem_surface_mesh(problem: VarietyProblem, N: int, k: int = 8) -> SurfaceMesh:
    if problem.is_curve:
        raise ConfigError(f"{problem.name} is a curve problem")
    sings = [(s.location, s.chart) for s in problem.singularities]
    return build_surface_mesh(problem.polynomial, problem.generator, N, sings, k=k)


def solve_surface_problem(problem: VarietyProblem, N: int, k: int = 8,
                          debug: bool = False) -> SurfaceSolution:
    """Mesh with about ``N^2`` nodes, nine-point rows, sparse LU."""
    mesh = problem_surface_mesh(problem, N, k)
    sys = assemble_surface(mesh, problem.c, problem.f, problem.variables, k=k, debug=debug)
    sol = solve_sparse(sys)
    out = SurfaceSolution(problem.name, mesh.nodes, sol.values, sol.residual, mesh, system=sys,
                          meta={"N": N, "nodes": mesh.N, "spacing_ratio": mesh.stats["ratio"],
                                "singular_nodes": sorted(mesh.singular_nodes)})
    if problem.exact_solution is not None:
        out.exact = eval_field(problem.exact_solution, problem.variables, mesh.nodes,
                               "exact_solution")
    return out


def export_surface_solution_csv(sol: SurfaceSolution, path) -> None:
    """Columns: index, x, y, z, u[, exact_u, abs_error]."""
    exact = sol.exact is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "z", "u"] + (["exact_u", "abs_error"] if exact else []))
        for i in range(sol.N):
            row = [i, *(repr(float(v)) for v in sol.nodes[i]), repr(float(sol.values[i]))]
            if exact:
                row += [repr(float(sol.exact[i])), repr(float(abs(sol.values[i] - sol.exact[i])))]
            w.writerow(row)


def dump_system_json(sys: DiscreteSystem, path) -> None:
    """Sparse system as ``row, col, value`` triplets plus the right-hand side."""
    A = sys.matrix().tocoo()
    data = {"n": int(sys.n),
            "triplets": [[int(r), int(c), float(v)] for r, c, v in zip(A.row, A.col, A.data)],
            "rhs": [float(v) for v in sys.rhs]}
    with open(path, "w") as fh:
        json.dump(data, fh)
