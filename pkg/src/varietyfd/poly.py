"""Sparse multivariate polynomials and closed-form scalar expressions.

Both are parsed with the stdlib :mod:`ast` parser after mapping ``^`` to
``**``; the accepted node set is whitelisted so anything outside the
grammar is a :class:`~varietyfd.errors.ParseError` carrying the offending
position in the original text.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from varietyfd import kernels
from varietyfd.errors import EvaluationError, ParseError

Exponent = tuple[int, ...]


def _to_python_syntax(text: str) -> tuple[str, list[int]]:
    """Replace ``^`` by ``**`` and return an index map back to ``text``."""
    out: list[str] = []
    where: list[int] = []
    for i, ch in enumerate(text):
        if ch == "^":
            out.append("**")
            where.extend([i, i])
        else:
            out.append(ch)
            where.append(i)
    where.append(len(text))
    return "".join(out), where


def _parse_ast(text: str) -> tuple[ast.expr, list[int]]:
    src, where = _to_python_syntax(text)
    if not src.strip():
        raise ParseError("empty expression", text, 0)
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        offset = (exc.offset or 1) - 1
        lead = len(src) - len(src.lstrip())
        pos = where[min(offset + lead, len(where) - 1)]
        raise ParseError(f"syntax error: {exc.msg}", text, pos) from None
    # account for stripped leading whitespace
    lead = len(src) - len(src.lstrip())
    mapped = [where[min(i + lead, len(where) - 1)] for i in range(len(src) + 1)]
    return tree.body, mapped


def _pos(node: ast.AST, mapped: list[int]) -> int:
    col = getattr(node, "col_offset", 0)
    return mapped[min(col, len(mapped) - 1)]


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Polynomial in ``variables`` stored as ``{exponent tuple: coefficient}``.

    The term map is canonical: merged exponents and no zero coefficients.
    """

    variables: tuple[str, ...]
    terms: Mapping[Exponent, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        nvar = len(self.variables)
        clean: dict[Exponent, float] = {}
        for exp, coef in self.terms.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvar or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for variables {self.variables}")
            clean[exp] = clean.get(exp, 0.0) + float(coef)
        clean = {e: c for e, c in sorted(clean.items(), key=_term_order) if c != 0.0}
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "terms", clean)

    # -- construction ---------------------------------------------------
    @classmethod
    def constant(cls, variables: Sequence[str], value: float) -> "Polynomial":
        return cls(tuple(variables), {(0,) * len(variables): value})

    @classmethod
    def variable(cls, variables: Sequence[str], name: str) -> "Polynomial":
        idx = list(variables).index(name)
        exp = tuple(1 if i == idx else 0 for i in range(len(variables)))
        return cls(tuple(variables), {exp: 1.0})

    # -- arrays for the kernels -----------------------------------------
    @cached_property
    def _coeffs(self) -> np.ndarray:
        return np.ascontiguousarray(list(self.terms.values()), dtype=float)

    @cached_property
    def _exps(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, len(self.variables)), dtype=np.int64)
        return np.ascontiguousarray(list(self.terms.keys()), dtype=np.int64)

    # -- algebra ----------------------------------------------------------
    def _check(self, other: "Polynomial") -> None:
        if other.variables != self.variables:
            raise ValueError("polynomials over different variable lists")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        return Polynomial.constant(self.variables, float(other))

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.variables, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out: dict[Exponent, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.variables, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if int(k) != k or k < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        result = Polynomial.constant(self.variables, 1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.variables == other.variables and dict(self.terms) == dict(other.terms)

    def __hash__(self) -> int:
        return hash((self.variables, tuple(self.terms.items())))

    # -- inspection -----------------------------------------------------
    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def min_degree(self) -> int:
        return min((sum(e) for e in self.terms), default=-1)

    def homogeneous_part(self, k: int) -> "Polynomial":
        return Polynomial(self.variables, {e: c for e, c in self.terms.items() if sum(e) == k})

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # -- evaluation -----------------------------------------------------
    def __call__(self, x) -> float:
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.nvars},)")
        return kernels.poly_eval(self._coeffs, self._exps, x)

    def eval_many(self, pts) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.nvars:
            raise ValueError(f"points have shape {pts.shape}, expected (m, {self.nvars})")
        return kernels.poly_eval_many(self._coeffs, self._exps, pts)

    # -- calculus -------------------------------------------------------
    def derivative(self, var: int | str) -> "Polynomial":
        j = self.variables.index(var) if isinstance(var, str) else int(var)
        out: dict[Exponent, float] = {}
        for e, c in self.terms.items():
            if e[j]:
                ne = list(e)
                ne[j] -= 1
                out[tuple(ne)] = c * e[j]
        return Polynomial(self.variables, out)

    @cached_property
    def gradient(self) -> tuple["Polynomial", ...]:
        return tuple(self.derivative(j) for j in range(self.nvars))

    @cached_property
    def hessian(self) -> tuple[tuple["Polynomial", ...], ...]:
        return jacobian(self.gradient)

    def grad_at(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        return np.array([kernels.poly_eval(g._coeffs, g._exps, x) for g in self.gradient])

    def hessian_at(self, x) -> np.ndarray:
        return np.array([[h(x) for h in row] for row in self.hessian])

    def translate(self, shift) -> "Polynomial":
        """Return ``q`` with ``q(z) = p(shift + z)``."""
        shift = [float(s) for s in shift]
        result = Polynomial(self.variables, {})
        var_polys = [Polynomial.variable(self.variables, v) + s
                     for v, s in zip(self.variables, shift)]
        for e, c in self.terms.items():
            term = Polynomial.constant(self.variables, c)
            for vp, k in zip(var_polys, e):
                if k:
                    term = term * vp ** k
            result = result + term
        return result

    # -- text -----------------------------------------------------------
    def to_string(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms.items():
            mono = "*".join(
                v if k == 1 else f"{v}^{k}" for v, k in zip(self.variables, e) if k
            )
            mag = abs(c)
            mag_s = str(int(mag)) if mag.is_integer() and mag < 1e15 else repr(mag)
            if mono:
                body = mono if mag == 1.0 else f"{mag_s}*{mono}"
            else:
                body = mag_s
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()!r}, vars={self.variables})"


def _term_order(item: tuple[Exponent, float]):
    e = item[0]
    return (-sum(e), tuple(-k for k in e))


def jacobian(polys: Iterable[Polynomial]) -> tuple[tuple[Polynomial, ...], ...]:
    return tuple(tuple(p.derivative(j) for j in range(p.nvars)) for p in polys)


def gradient(p: Polynomial) -> tuple[Polynomial, ...]:
    return p.gradient


def hessian(p: Polynomial) -> tuple[tuple[Polynomial, ...], ...]:
    return p.hessian


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse a polynomial such as ``"(x^2+y^2)^2 + 4*x*(x^2+y^2) - 4*y^2"``.

    Products and nonnegative integer powers of sums are expanded; division
    is allowed only by constant subexpressions (``5/12*x``).
    """
    variables = tuple(variables)
    node, mapped = _parse_ast(text)

    def build(n: ast.AST) -> Polynomial:
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)) \
                and not isinstance(n.value, bool):
            return Polynomial.constant(variables, float(n.value))
        if isinstance(n, ast.Name):
            if n.id not in variables:
                raise ParseError(f"unknown variable {n.id!r}", text, _pos(n, mapped))
            return Polynomial.variable(variables, n.id)
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, (ast.USub, ast.UAdd)):
            inner = build(n.operand)
            return -inner if isinstance(n.op, ast.USub) else inner
        if isinstance(n, ast.BinOp):
            if isinstance(n.op, ast.Pow):
                base = build(n.left)
                expo = build(n.right)
                k = _constant_value(expo)
                if k is None or k != int(k) or k < 0:
                    raise ParseError("exponent must be a nonnegative integer",
                                     text, _pos(n.right, mapped))
                return base ** int(k)
            left, right = build(n.left), build(n.right)
            if isinstance(n.op, ast.Add):
                return left + right
            if isinstance(n.op, ast.Sub):
                return left - right
            if isinstance(n.op, ast.Mult):
                return left * right
            if isinstance(n.op, ast.Div):
                k = _constant_value(right)
                if k is None:
                    raise ParseError("division by a non-constant", text, _pos(n.right, mapped))
                if k == 0.0:
                    raise ParseError("division by zero", text, _pos(n.right, mapped))
                return left * (1.0 / k)
        raise ParseError(f"unsupported syntax {type(n).__name__}", text, _pos(n, mapped))

    return build(node)


def _constant_value(p: Polynomial) -> float | None:
    if p.is_zero:
        return 0.0
    if p.degree() == 0:
        return next(iter(p.terms.values()))
    return None


# ---------------------------------------------------------------------------
# scalar expressions

_FUNCS = {"sqrt": np.sqrt, "sin": np.sin, "cos": np.cos}
_CONSTS = {"pi": math.pi}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


class ScalarExpr:
    """Closed-form real expression over named variables.

    Grammar: numbers, variables, ``+ - * / ^``, ``sqrt``, ``sin``, ``cos``
    and the constant ``pi``.  Evaluation accepts scalars or numpy arrays.
    """

    def __init__(self, text: str, variables: Sequence[str] | None = None):
        self.text = str(text)
        node, mapped = _parse_ast(self.text)
        names: set[str] = set()
        self._validate(node, mapped, names)
        if variables is not None:
            unknown = names - set(variables)
            if unknown:
                bad = sorted(unknown)[0]
                raise ParseError(f"unknown variable {bad!r}", self.text, self.text.find(bad))
        self.free_variables = frozenset(names)
        self._code = compile(ast.Expression(body=node), "<expr>", "eval")

    def _validate(self, n: ast.AST, mapped: list[int], names: set[str]) -> None:
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)) \
                and not isinstance(n.value, bool):
            return
        if isinstance(n, ast.Name):
            if n.id in _FUNCS:
                raise ParseError(f"function {n.id!r} used as a value", self.text, _pos(n, mapped))
            if n.id not in _CONSTS:
                names.add(n.id)
            return
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, (ast.USub, ast.UAdd)):
            self._validate(n.operand, mapped, names)
            return
        if isinstance(n, ast.BinOp) and isinstance(n.op, _BINOPS):
            self._validate(n.left, mapped, names)
            self._validate(n.right, mapped, names)
            return
        if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id in _FUNCS \
                and len(n.args) == 1 and not n.keywords:
            self._validate(n.args[0], mapped, names)
            return
        raise ParseError(f"unsupported syntax {type(n).__name__}", self.text, _pos(n, mapped))

    def evaluate(self, bindings: Mapping[str, object] | None = None, **kw):
        env = dict(bindings or {})
        env.update(kw)
        missing = self.free_variables - env.keys()
        if missing:
            raise EvaluationError(f"unbound variable(s) {sorted(missing)} in {self.text!r}")
        ns = {k: np.asarray(v, dtype=float) if np.ndim(v) else np.float64(v)
              for k, v in env.items() if k in self.free_variables}
        ns.update(_FUNCS)
        ns.update(_CONSTS)
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                val = eval(self._code, {"__builtins__": {}}, ns)
        except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
            raise EvaluationError(f"cannot evaluate {self.text!r}: {exc}") from None
        if np.ndim(val) == 0:
            return float(val)
        return np.asarray(val, dtype=float)

    __call__ = evaluate

    def evaluate_points(self, variables: Sequence[str], pts: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``pts`` (columns named by ``variables``)."""
        pts = np.asarray(pts, dtype=float)
        val = self.evaluate({v: pts[:, i] for i, v in enumerate(variables)})
        return np.broadcast_to(np.asarray(val, dtype=float), (pts.shape[0],)).copy()

    def __repr__(self) -> str:
        return f"ScalarExpr({self.text!r})"


def eval_expr(e: ScalarExpr, bindings: Mapping[str, float]) -> float:
    return e.evaluate(bindings)
