"""Problem descriptions loaded from JSON configs.

A config names the variety (one polynomial), the coefficients ``c`` and
``f`` of ``-Delta u + c u = f``, an optional exact solution, and the
geometric side information the solvers need: a global parameterisation for
curves, singular points with their branch or chart declarations, and the
point generator for surfaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from varietyfd.errors import ConfigError
from varietyfd.poly import Polynomial, ScalarExpr, parse_polynomial

SCHEMA_VERSION = 1

_expr = {"type": "string", "minLength": 1}
_expr_list = {"type": "array", "items": _expr}
_number_or_expr = {"anyOf": [{"type": "number"}, _expr]}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema_version", "name", "dimension", "polynomial", "c", "f"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "dimension": {"enum": [1, 2]},
        "variables": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 3},
        "polynomial": _expr,
        "c": _expr,
        "f": _expr,
        "exact_solution": _expr,
        "seed": {"type": "array", "items": {"type": "number"}},
        "global_param": {
            "type": "object",
            "required": ["X", "Xp", "Xpp", "domain"],
            "additionalProperties": False,
            "properties": {
                "param": {"type": "string"},
                "X": _expr_list, "Xp": _expr_list, "Xpp": _expr_list,
                "domain": {"type": "array", "items": _number_or_expr, "minItems": 2, "maxItems": 2},
            },
        },
        "singularities": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["location"],
                "additionalProperties": False,
                "properties": {
                    "location": {"type": "array", "items": {"type": "number"}},
                    "branches": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["m", "series_var"],
                            "properties": {
                                "kind": {"const": "power-series"},
                                "m": {"type": "integer", "minimum": 2},
                                "series_var": {"type": "string"},
                                "order": {"type": "integer", "minimum": 4},
                                "root": {"type": "number"},
                            },
                        },
                    },
                    "chart": {
                        "type": "object",
                        "required": ["X", "dX", "ddX", "valid_radius"],
                        "properties": {
                            "params": {"type": "array", "items": {"type": "string"},
                                       "minItems": 2, "maxItems": 2},
                            "X": _expr_list,
                            "dX": {"type": "array", "items": _expr_list},
                            "ddX": {"type": "array", "items": _expr_list},
                            "valid_radius": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
            },
        },
        "generator": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"const": "revolution"},
                "axis": {"enum": ["x", "y", "z"]},
                "param": {"type": "string"},
                "radius": _expr,
                "height": _expr,
                "domain": {"type": "array", "items": _number_or_expr, "minItems": 2, "maxItems": 2},
                "closed": {"type": "boolean"},
                "rings": {"enum": ["arclength", "latitude", "product"]},
            },
        },
        "reference": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["exact", "refined", "self"]},
                "method": {"enum": ["global", "local"]},
                "stencil": {"type": "integer"},
                "N": {"type": "integer", "minimum": 3},
            },
        },
        "defaults": {
            "type": "object",
            "properties": {
                "method": {"enum": ["global", "local"]},
                "stencil": {"type": "integer", "minimum": 3},
                "Ns": {"type": "array", "items": {"type": "integer", "minimum": 3}},
                "options": {"type": "object"},
            },
        },
    },
}


@dataclass
class SingularityDecl:
    location: tuple[float, ...]
    branches: list[dict] = field(default_factory=list)
    chart: dict | None = None


@dataclass
class VarietyProblem:
    name: str
    dimension: int
    variables: tuple[str, ...]
    polynomial: Polynomial
    c: ScalarExpr
    f: ScalarExpr
    exact_solution: ScalarExpr | None = None
    global_param: Any = None
    singularities: list[SingularityDecl] = field(default_factory=list)
    seed: tuple[float, ...] | None = None
    generator: dict | None = None
    reference: dict = field(default_factory=lambda: {"kind": "exact"})
    defaults: dict = field(default_factory=dict)
    description: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_curve(self) -> bool:
        return self.dimension == 1

    def branch_declarations(self) -> dict[int, list[dict]]:
        return {k: s.branches for k, s in enumerate(self.singularities) if s.branches}


def _schema_error(err: jsonschema.ValidationError, source: str) -> ConfigError:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return ConfigError(f"{source}: schema violation at {where}: {err.message}")


def _parse_expr(text: str, variables, what: str, source: str) -> ScalarExpr:
    try:
        return ScalarExpr(text, variables)
    except ConfigError as exc:
        raise ConfigError(f"{source}: field {what!r}: {exc}") from None


def problem_from_dict(data: dict, source: str = "<config>", verify: bool = True) -> VarietyProblem:
    """Validate ``data`` against :data:`CONFIG_SCHEMA` and build the problem."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise _schema_error(err, source) from None
    dim = data["dimension"]
    ambient = dim + 1
    variables = tuple(data.get("variables", ("x", "y", "z")[:ambient]))
    if len(variables) != ambient:
        raise ConfigError(f"{source}: dimension {dim} needs {ambient} variables, "
                          f"got {len(variables)} ({', '.join(variables)})")
    try:
        F = parse_polynomial(data["polynomial"], variables)
    except ConfigError as exc:
        raise ConfigError(f"{source}: field 'polynomial': {exc}") from None
    if F.degree() < 1:
        raise ConfigError(f"{source}: polynomial is constant")
    c = _parse_expr(data["c"], variables, "c", source)
    f = _parse_expr(data["f"], variables, "f", source)
    exact = (_parse_expr(data["exact_solution"], variables, "exact_solution", source)
             if "exact_solution" in data else None)

    gp = None
    if "global_param" in data:
        if dim != 1:
            raise ConfigError(f"{source}: global_param is only supported for curves")
        from varietyfd.curve_fd.global_scheme import GlobalParam

        g = data["global_param"]
        for key in ("X", "Xp", "Xpp"):
            if len(g[key]) != ambient:
                raise ConfigError(f"{source}: global_param.{key} needs {ambient} components")
        gp = GlobalParam.from_strings(g["X"], g["Xp"], g["Xpp"],
                                      [str(v) for v in g["domain"]], g.get("param", "t"))

    sings = []
    for k, s in enumerate(data.get("singularities", [])):
        if len(s["location"]) != ambient:
            raise ConfigError(f"{source}: singularities[{k}].location needs {ambient} coordinates")
        if dim == 1 and "chart" in s:
            raise ConfigError(f"{source}: singularities[{k}]: surface charts need dimension 2")
        if dim == 2 and s.get("branches"):
            raise ConfigError(f"{source}: singularities[{k}]: branch series need dimension 1")
        for b in s.get("branches", []):
            if b["series_var"] not in variables:
                raise ConfigError(f"{source}: singularities[{k}]: unknown series_var "
                                  f"{b['series_var']!r}")
        sings.append(SingularityDecl(tuple(float(v) for v in s["location"]),
                                     [dict(b) for b in s.get("branches", [])], s.get("chart")))

    if dim == 2 and "generator" not in data:
        raise ConfigError(f"{source}: surfaces need a 'generator'")
    ref = dict(data.get("reference", {"kind": "exact"}))
    if ref["kind"] == "exact" and exact is None:
        raise ConfigError(f"{source}: reference 'exact' requires exact_solution")
    if ref["kind"] == "refined" and ref.get("method", "global") == "global" and gp is None:
        raise ConfigError(f"{source}: refined global reference requires global_param")
    seed = tuple(float(v) for v in data["seed"]) if "seed" in data else None
    if seed is not None and len(seed) != ambient:
        raise ConfigError(f"{source}: seed needs {ambient} coordinates")

    prob = VarietyProblem(
        name=data["name"], dimension=dim, variables=variables, polynomial=F, c=c, f=f,
        exact_solution=exact, global_param=gp, singularities=sings, seed=seed,
        generator=data.get("generator"), reference=ref, defaults=dict(data.get("defaults", {})),
        description=data.get("description", ""), raw=data,
    )
    if verify:
        verify_singularities(prob, source)
    return prob


def verify_singularities(prob: VarietyProblem, source: str = "<config>") -> None:
    """Declared singular points must be singular points of the polynomial."""
    from varietyfd.curve_mesh.mesh import find_singular_points

    declared = [s.location for s in prob.singularities]
    if declared:
        find_singular_points(prob.polynomial, declared=declared)


def load_problem(path) -> VarietyProblem:
    """Read a JSON config (a file path or the name of a bundled config)."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_config_path(str(path))
        if bundled is None:
            raise ConfigError(f"config {path!s} not found")
        p = bundled
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return problem_from_dict(data, str(p))


def bundled_configs() -> list[str]:
    root = resources.files("varietyfd") / "configs"
    return sorted(e.name[:-5] for e in root.iterdir() if e.name.endswith(".json"))


def bundled_config_path(name: str) -> Path | None:
    stem = name[:-5] if name.endswith(".json") else name
    cand = resources.files("varietyfd") / "configs" / f"{stem}.json"
    return Path(str(cand)) if cand.is_file() else None
