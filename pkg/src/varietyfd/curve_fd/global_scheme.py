"""Finite differences through a closed-form periodic parameterisation.

With ``g(t) = |X'(t)|^2`` the problem becomes the periodic ODE
``-u''/g + g' u'/(2 g^2) + c u = f`` on ``[a, b]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from varietyfd.curve_fd.system import DiscreteSystem, RowBuilder
from varietyfd.errors import ConfigError, EvaluationError, NumericalError
from varietyfd.poly import ScalarExpr

# central weights on offsets -2..2 (5-point) and -1..1 (3-point)
_D2 = {3: np.array([1.0, -2.0, 1.0]),
       5: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0}
_D1 = {3: np.array([-0.5, 0.0, 0.5]),
       5: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0}


@dataclass
class GlobalParam:
    """``t -> X(t)`` with first and second derivatives, each a list of expressions."""

    X: Sequence[ScalarExpr]
    Xp: Sequence[ScalarExpr]
    Xpp: Sequence[ScalarExpr]
    domain: tuple[float, float]
    param: str = "t"
    periodic: bool = True

    @classmethod
    def from_strings(cls, X, Xp, Xpp, domain, param: str = "t", periodic: bool = True):
        mk = lambda comps: tuple(ScalarExpr(c, [param]) for c in comps)  # noqa: E731
        a, b = (float(ScalarExpr(str(d)).evaluate()) for d in domain)
        return cls(mk(X), mk(Xp), mk(Xpp), (a, b), param, periodic)

    def _eval(self, comps, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.broadcast_to(np.asarray(e.evaluate({self.param: t}), dtype=float), t.shape)
                for e in comps]
        return np.stack(cols, axis=-1)

    def point(self, t) -> np.ndarray:
        return self._eval(self.X, t)

    def velocity(self, t) -> np.ndarray:
        return self._eval(self.Xp, t)

    def acceleration(self, t) -> np.ndarray:
        return self._eval(self.Xpp, t)

    def validate(self, N: int) -> None:
        a, b = self.domain
        t = np.linspace(a, b, 10 * N, endpoint=False)
        if np.min(np.linalg.norm(self.velocity(t), axis=1)) <= 0.0:
            raise ConfigError("parameterisation has vanishing velocity")
        if self.periodic and np.linalg.norm(self.point(a) - self.point(b)) > 1e-10:
            raise ConfigError("periodic parameterisation does not close: X(a) != X(b)")


def metric_from_param(gp: GlobalParam, t):
    """``(g, g')`` with ``g = |X'|^2`` and ``g' = 2 X'.X''``."""
    v = gp.velocity(t)
    g = np.sum(v * v, axis=-1)
    dg = 2.0 * np.sum(v * gp.acceleration(t), axis=-1)
    if np.any(g <= 0.0):
        raise NumericalError("degenerate parameterisation (g <= 0)")
    if np.ndim(t) == 0:
        return float(g[0]), float(dg[0])
    return g, dg


def eval_field(expr: ScalarExpr, variables, pts: np.ndarray, what: str) -> np.ndarray:
    try:
        return expr.evaluate_points(variables, pts)
    except EvaluationError as exc:
        raise EvaluationError(f"{what}: {exc}") from None


def assemble_global(gp: GlobalParam, c: ScalarExpr, f: ScalarExpr, N: int,
                    variables=("x", "y"), stencil: int = 3) -> DiscreteSystem:
    """Cyclic banded system on ``t_i = a + i (b - a)/N``.

    For ``stencil == 3`` row ``i`` is ``L_i u_{i-1} + C_i u_i + R_i u_{i+1}``
    with ``C_i = c + 2/(g dt^2)`` and ``L_i, R_i = -(1 +- g' dt/(4g))/(g dt^2)``.
    """
    if stencil not in _D2:
        raise ConfigError(f"global scheme supports 3- or 5-point stencils, not {stencil}")
    if N < stencil:
        raise ConfigError(f"N={N} too small for a {stencil}-point stencil")
    a, b = gp.domain
    dt = (b - a) / N
    t = a + dt * np.arange(N)
    pts = gp.point(t)
    g, dg = metric_from_param(gp, t)
    cv = eval_field(c, variables, pts, "c")
    fv = eval_field(f, variables, pts, "f")
    half = stencil // 2
    offs = np.arange(-half, half + 1)
    # coefficient of u_{i+k}: -(1/g) D2/dt^2 + g'/(2g^2) D1/dt
    coef = (-_D2[stencil][None, :] / (g[:, None] * dt**2)
            + (dg / (2.0 * g**2))[:, None] * _D1[stencil][None, :] / dt)
    # rebuild the centre weight so each operator row annihilates constants
    # exactly; otherwise rounding acts like a shift of c of order eps/dt^2
    coef[:, half] = 0.0
    coef[:, half] = -coef.sum(axis=1) + cv
    rb = RowBuilder(N)
    for i in range(N):
        rb.add(i, (i + offs) % N, coef[i], fv[i])
    return rb.build([(i, -1) for i in range(N)])
