"""Local structure of a plane curve at a singular point.

``branch_tangents`` factors the lowest-degree form of ``F`` recentred at the
point.  ``fit_power_series_chart`` computes a branch ``X(s)`` in which one
coordinate is ``s**m`` and the other a truncated power series, by successive
undetermined coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from varietyfd.errors import ChartError, ConvergenceError, RankDeficiencyError
from varietyfd.poly import Polynomial

ROOT_TOL = 1e-6


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _canonical_direction(v: np.ndarray) -> np.ndarray:
    v = _unit(v)
    k = 0 if abs(v[0]) > 1e-12 else 1
    return v if v[k] > 0 else -v


def branch_tangents(F: Polynomial, point) -> list[tuple[np.ndarray, int]]:
    """Real tangent directions (unit, with multiplicity) of ``F = 0`` at ``point``."""
    if F.nvars != 2:
        raise ValueError("branch_tangents works on plane curves")
    q = F.translate(point)
    # drop round-off from recentring
    scale = max(q.max_abs_coefficient(), 1.0)
    q = Polynomial(q.variables, {e: c for e, c in q.terms.items() if abs(c) > 1e-12 * scale})
    k = q.min_degree()
    if k <= 0:
        raise ValueError("point is not on the curve")
    form = q.homogeneous_part(k)
    # h(1, tau) = sum_i c_i tau^i where c_i multiplies x^(k-i) y^i
    coeffs = np.zeros(k + 1)
    for (ex, ey), c in form.terms.items():
        coeffs[ey] = c
    out: list[tuple[np.ndarray, int]] = []
    deg = int(np.max(np.nonzero(coeffs)[0]))
    vertical_mult = k - deg
    if deg > 0:
        roots = np.roots(coeffs[: deg + 1][::-1])
        used = np.zeros(len(roots), dtype=bool)
        for i, r in enumerate(roots):
            if used[i]:
                continue
            close = np.abs(roots - r) < ROOT_TOL ** (1.0 / max(deg, 1)) * max(1.0, abs(r))
            close &= ~used
            used |= close
            mult = int(close.sum())
            rr = roots[close].mean()
            if abs(rr.imag) > 1e-7 * max(1.0, abs(rr)):
                continue
            out.append((_canonical_direction([1.0, rr.real]), mult))
    if vertical_mult:
        out.append((np.array([0.0, 1.0]), vertical_mult))
    if not out:
        raise ChartError(f"no real tangent directions at {tuple(point)} (isolated real point)")
    return out


# ---------------------------------------------------------------------------
# truncated power series helpers (coefficient arrays, index = power of s)

def _series_mul(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    return np.convolve(a[:n], b[:n])[:n]


def _series_inv(a: np.ndarray, n: int) -> np.ndarray:
    if a[0] == 0:
        raise ZeroDivisionError("series with zero constant term")
    out = np.zeros(n)
    out[0] = 1.0 / a[0]
    for k in range(1, n):
        m = min(k, len(a) - 1)
        out[k] = -np.dot(a[1:m + 1], out[k - 1::-1][:m]) / a[0]
    return out


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    m = min(n, len(a))
    out[:m] = a[:m]
    return out


@dataclass
class BranchChart:
    """Local parameterisation ``s -> X(s)`` of one branch through ``location``.

    ``kind == "tangent-line"``: the branch is a graph over its tangent line,
    ``X(s) = location + s*tangent + lam(s)*normal`` with ``F(X(s)) = 0``.

    ``kind == "power-series"``: coordinate ``series_var`` equals
    ``location + s**m`` and the other is ``location + sum_k coeffs[k] s**k``.
    """

    kind: str
    location: np.ndarray
    F: Polynomial
    tangent: np.ndarray | None = None
    m: int = 1
    series_var: int = 1
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(1))
    valid_radius: float = np.inf

    @property
    def solved_var(self) -> int:
        return 1 - self.series_var

    # -- power-series form ---------------------------------------------
    def _poly_eval(self, s, deriv: int = 0):
        c = np.polynomial.polynomial.polyder(self.coeffs, deriv) if deriv else self.coeffs
        return np.polynomial.polynomial.polyval(s, c)

    def point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "tangent-line":
            return np.array([self._tangent_point(float(si)) for si in np.atleast_1d(s)]).reshape(
                s.shape + (2,))
        out = np.empty(s.shape + (2,))
        out[..., self.series_var] = self.location[self.series_var] + s ** self.m
        out[..., self.solved_var] = self.location[self.solved_var] + self._poly_eval(s)
        return out

    def derivative(self, s, order: int = 1) -> np.ndarray:
        if self.kind != "power-series":
            raise NotImplementedError("derivatives are provided for power-series charts")
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape + (2,))
        m = self.m
        if order > m:
            sv = np.zeros_like(s)
        else:
            fac = float(np.prod(np.arange(m - order + 1, m + 1)))
            sv = fac * s ** (m - order)
        out[..., self.series_var] = sv
        out[..., self.solved_var] = self._poly_eval(s, order)
        return out

    def metric_series(self, n: int) -> np.ndarray:
        """Taylor coefficients of ``g(s) = |X'(s)|^2`` up to ``s**(n-1)``."""
        dx = np.polynomial.polynomial.polyder(self.coeffs)
        dy = np.zeros(max(self.m, 1))
        dy[self.m - 1] = float(self.m)
        dx = _pad(dx, n)
        dy = _pad(dy, n)
        return _series_mul(dx, dx, n) + _series_mul(dy, dy, n)

    def _tangent_point(self, s: float) -> np.ndarray:
        t = self.tangent
        nrm = np.array([-t[1], t[0]])
        base = self.location + s * t
        if s == 0.0:
            return self.location.copy()
        lam = 0.0
        for _ in range(60):
            x = base + lam * nrm
            val = self.F(x)
            d = float(self.F.grad_at(x) @ nrm)
            if d == 0.0:
                raise RankDeficiencyError("tangent chart: zero normal derivative", x)
            step = val / d
            lam -= step
            if abs(step) <= 1e-15 * max(1.0, abs(s)):
                return base + lam * nrm
        raise ConvergenceError(f"tangent chart point at s={s} did not converge")

    def residual(self, s) -> np.ndarray:
        return np.abs(self.F.eval_many(np.atleast_2d(self.point(np.atleast_1d(s)))))

    def param_of(self, p, sign: float = 1.0) -> float:
        """Chart parameter of a point on this branch (``sign`` picks the side)."""
        p = np.asarray(p, dtype=float) - self.location
        if self.kind == "tangent-line":
            return float(p @ self.tangent)
        z = p[self.series_var]
        if self.m % 2 == 1:
            return float(np.sign(z) * abs(z) ** (1.0 / self.m))
        return float(sign * abs(z) ** (1.0 / self.m))


def _lowest_order(a: np.ndarray, tol: float) -> int:
    nz = np.nonzero(np.abs(a) > tol)[0]
    return int(nz[0]) if nz.size else len(a)


def fit_power_series_chart(F: Polynomial, point, m: int, order: int,
                           series_var: int | str = 1, root: float | None = None,
                           residual_tol: float = 1e-12) -> BranchChart:
    """Fit ``X(s)`` with ``X[series_var] = point + s**m`` on ``F = 0``.

    The other coordinate is expanded to ``s**order``.  ``root`` selects the
    leading coefficient when several real choices exist (default: the
    positive one, else the largest).
    """
    if F.nvars != 2:
        raise ValueError("power-series charts are for plane curves")
    if isinstance(series_var, str):
        series_var = F.variables.index(series_var)
    solved = 1 - series_var
    point = np.asarray(point, dtype=float)
    q = F.translate(point)
    scale = max(q.max_abs_coefficient(), 1.0)
    # P(x, s) = q with the series coordinate replaced by s^m; terms as (i, j, c)
    terms = [(e[solved], e[series_var] * m, c) for e, c in q.terms.items()
             if abs(c) > 1e-13 * scale]
    if any(i == 0 and j == 0 for i, j, _ in terms):
        raise ChartError("point is not on the curve")

    # leading exponent from the Newton polygon
    lead_q = lead_a = None
    for qq in range(1, m * max(F.degree(), 1) * 4 + 1):
        vals = [i * qq + j for i, j, _ in terms]
        low = min(vals)
        active = [(i, c) for (i, j, c), v in zip(terms, vals) if v == low]
        if len(active) < 2 or all(i == 0 for i, _ in active):
            continue
        deg = max(i for i, _ in active)
        poly = np.zeros(deg + 1)
        for i, c in active:
            poly[i] += c
        roots = np.roots(poly[::-1])
        real = [r.real for r in roots if abs(r.imag) < 1e-9 and abs(r.real) > 1e-12]
        if not real:
            continue
        if root is not None:
            pick = min(real, key=lambda r: abs(r - root))
        else:
            pos = [r for r in real if r > 0]
            pick = min(pos) if pos else max(real)
        lead_q, lead_a = qq, pick
        break
    if lead_q is None:
        raise ChartError(f"no real power-series branch with m={m} at {tuple(point)}")
    if order < lead_q:
        raise ChartError("order below the leading exponent")

    n_terms = order + 1
    coeffs = np.zeros(n_terms)
    coeffs[lead_q] = lead_a

    def substitute(c: np.ndarray, n: int) -> np.ndarray:
        c = _pad(c, n)
        maxi = max(i for i, _, _ in terms)
        powers = [np.eye(1, n, 0).ravel()]
        for _ in range(maxi):
            powers.append(_series_mul(powers[-1], c, n))
        out = np.zeros(n)
        for i, j, cf in terms:
            if j < n:
                out[j:] += cf * powers[i][: n - j]
        return out

    def substitute_dx(c: np.ndarray, n: int) -> np.ndarray:
        c = _pad(c, n)
        maxi = max(i for i, _, _ in terms)
        powers = [np.eye(1, n, 0).ravel()]
        for _ in range(maxi):
            powers.append(_series_mul(powers[-1], c, n))
        out = np.zeros(n)
        for i, j, cf in terms:
            if i and j < n:
                out[j:] += i * cf * powers[i - 1][: n - j]
        return out

    probe = n_terms + lead_q * max(i for i, _, _ in terms) + 2
    dP = substitute_dx(coeffs, probe)
    nu = _lowest_order(dP, 1e-12 * scale)
    if nu >= probe:
        raise ChartError("degenerate linearisation (repeated leading root)")
    lin = dP[nu]
    growth_guard = 1e150
    for k in range(lead_q + 1, n_terms):
        n = k + nu + 1
        res = substitute(coeffs, n)
        lower = res[: k + nu]
        if np.any(np.abs(lower) > 1e-9 * scale * np.maximum(1.0, np.abs(coeffs).max()) ** 2):
            bad = _lowest_order(lower, 1e-9 * scale)
            raise ChartError(f"inconsistent series at order s^{bad}; declared m={m} is wrong?")
        coeffs[k] = -res[k + nu] / lin
        if not np.isfinite(coeffs[k]) or abs(coeffs[k]) > growth_guard:
            raise ChartError(f"coefficient growth beyond guard at order {k}")

    chart = BranchChart(kind="power-series", location=point, F=F, m=m,
                        series_var=series_var, coeffs=coeffs)
    chart.valid_radius = _valid_radius(chart, residual_tol)
    return chart


def _valid_radius(chart: BranchChart, tol: float) -> float:
    """Largest ``r`` (on a grid) with ``|F(X(s))| <= tol`` for ``|s| <= r``."""
    nz = np.nonzero(chart.coeffs)[0]
    top = nz[-1] if nz.size else 1
    c = np.abs(chart.coeffs[top])
    # root test estimate of the convergence radius as the scan horizon
    est = c ** (-1.0 / top) if c > 0 else 10.0
    horizon = min(max(2.0 * est, 1e-3), 1e3)
    grid = np.linspace(0.0, horizon, 4001)[1:]
    res = np.maximum(chart.residual(grid), chart.residual(-grid))
    bad = np.nonzero(res > tol)[0]
    if bad.size == 0:
        return float(horizon)
    if bad[0] == 0:
        return 0.0
    return float(grid[bad[0] - 1])


def tangent_line_chart(F: Polynomial, point, tangent) -> BranchChart:
    return BranchChart(kind="tangent-line", location=np.asarray(point, dtype=float), F=F,
                       tangent=_unit(tangent), m=1)
