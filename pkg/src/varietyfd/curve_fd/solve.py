"""End-to-end curve solves: problem -> mesh or grid -> system -> solution."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from varietyfd.curve_fd.global_scheme import assemble_global, eval_field
from varietyfd.curve_fd.local_scheme import assemble_local_tangential
from varietyfd.curve_fd.system import solve_system
from varietyfd.curve_mesh.mesh import (
    Cycle,
    CurveMesh,
    build_cycle,
    build_singular_node,
    find_singular_points,
    uniform_arclength_mesh,
)
from varietyfd.errors import ConfigError
from varietyfd.problem import VarietyProblem

LOCAL_OPTIONS = ("chart_stencil", "switch_fraction", "cusp_rows")


@dataclass
class CurveSolution:
    """Nodal values; a singular point owns one row per branch passage."""

    problem: str
    method: str
    stencil: int
    nodes: np.ndarray
    tangents: np.ndarray
    branch_ids: np.ndarray
    values: np.ndarray
    residual: float
    mesh: CurveMesh | None = None
    params: np.ndarray | None = None
    exact: np.ndarray | None = None
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

    def singular_values(self) -> dict[tuple, list[tuple[int, float]]]:
        """``location -> [(branch_id, u), ...]`` over the singular passages."""
        out: dict[tuple, list[tuple[int, float]]] = {}
        for i in np.nonzero(self.branch_ids >= 0)[0]:
            key = tuple(np.round(self.nodes[i], 12).tolist())
            out.setdefault(key, []).append((int(self.branch_ids[i]), float(self.values[i])))
        return out


_CYCLES: dict[tuple, Cycle] = {}


def problem_cycle(problem: VarietyProblem) -> Cycle:
    """Traced cycle for ``problem``; cached because it does not depend on N."""
    key = (problem.name, problem.polynomial, problem.seed,
           tuple(s.location for s in problem.singularities),
           repr(problem.branch_declarations()))
    cyc = _CYCLES.get(key)
    if cyc is None:
        F = problem.polynomial
        decl = problem.branch_declarations()
        pts = [s.location for s in problem.singularities]
        pts = find_singular_points(F, declared=pts) if pts else []
        nodes = [build_singular_node(F, p, decl.get(k)) for k, p in enumerate(pts)]
        seed = problem.seed if problem.seed is not None else _default_seed(problem)
        cyc = build_cycle(F, seed, nodes)
        _CYCLES[key] = cyc
    return cyc


def _default_seed(problem: VarietyProblem):
    if problem.global_param is not None:
        return tuple(problem.global_param.point(problem.global_param.domain[0])[0])
    raise ConfigError(f"{problem.name}: curve configs need a 'seed' or a 'global_param'")


def problem_mesh(problem: VarietyProblem, N: int) -> CurveMesh:
    return uniform_arclength_mesh(problem_cycle(problem), N)


def _global_branch_ids(problem: VarietyProblem, pts: np.ndarray) -> np.ndarray:
    ids = np.full(len(pts), -1, dtype=int)
    for s in problem.singularities:
        hit = np.nonzero(np.linalg.norm(pts - np.asarray(s.location), axis=1) < 1e-12)[0]
        ids[hit] = np.arange(len(hit))
    return ids


def solve_curve_problem(problem: VarietyProblem, method: str = "local", N: int = 160,
                        stencil: int = 3, refine: int = 0, **options) -> CurveSolution:
    """Solve ``problem`` with the global or the local tangential scheme.

    ``options`` go to :func:`assemble_local_tangential` (``chart_stencil``,
    ``switch_fraction``, ``cusp_rows``).  The exact solution is attached
    when the problem has one.
    """
    if not problem.is_curve:
        raise ConfigError(f"{problem.name} is a surface problem")
    bad = set(options) - set(LOCAL_OPTIONS)
    if bad:
        raise ConfigError(f"unknown solver options: {', '.join(sorted(bad))}")
    var = problem.variables
    if method == "global":
        gp = problem.global_param
        if gp is None:
            raise ConfigError(f"{problem.name}: method 'global' needs global_param")
        gp.validate(N)
        sys = assemble_global(gp, problem.c, problem.f, N, variables=var, stencil=stencil)
        sol = solve_system(sys, refine=refine)
        a, b = gp.domain
        t = a + (b - a) * np.arange(N) / N
        pts = gp.point(t)
        v = gp.velocity(t)
        tan = v / np.linalg.norm(v, axis=1)[:, None]
        out = CurveSolution(problem.name, method, stencil, pts, tan,
                            _global_branch_ids(problem, pts), sol.values, sol.residual,
                            params=t)
    elif method == "local":
        mesh = problem_mesh(problem, N)
        sys = assemble_local_tangential(mesh, problem.c, problem.f, stencil=stencil,
                                        variables=var, **options)
        sol = solve_system(sys, refine=refine)
        ids = np.array([mesh.branch_id(i) for i in range(mesh.N)], dtype=int)
        out = CurveSolution(problem.name, method, stencil, mesh.nodes, mesh.tangents, ids,
                            sol.values, sol.residual, mesh=mesh)
    else:
        raise ConfigError(f"unknown method {method!r} (expected 'global' or 'local')")
    if problem.exact_solution is not None:
        out.exact = eval_field(problem.exact_solution, var, out.nodes, "exact_solution")
    return out


def export_curve_solution_csv(sol: CurveSolution, path) -> None:
    """Columns: index, x, y, branch_id, u[, exact_u, abs_error]."""
    exact = sol.exact is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "branch_id", "u"]
                   + (["exact_u", "abs_error"] if exact else []))
        for i in range(sol.N):
            row = [i, repr(float(sol.nodes[i, 0])), repr(float(sol.nodes[i, 1])),
                   int(sol.branch_ids[i]), repr(float(sol.values[i]))]
            if exact:
                row += [repr(float(sol.exact[i])), repr(float(abs(sol.values[i] - sol.exact[i])))]
            w.writerow(row)
