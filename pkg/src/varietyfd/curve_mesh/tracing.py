"""Predictor-corrector tracing of real plane curves ``F = 0``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from varietyfd.errors import ConvergenceError, RankDeficiencyError
from varietyfd.poly import Polynomial

ON_CURVE_TOL = 1e-10
SINGULAR_TOL = 1e-6

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass
class StepControl:
    h_init: float = 1e-3
    h_max: float = 0.005
    h_min: float = 1e-11
    max_angle: float = 0.02
    max_steps: int = 200_000
    newton_iters: int = 8


def curve_tangent(F: Polynomial, x) -> np.ndarray:
    g = F.grad_at(x)
    t = np.array([-g[1], g[0]])
    n = np.linalg.norm(t)
    if n == 0.0:
        raise RankDeficiencyError("zero gradient", np.asarray(x, dtype=float))
    return t / n


def project_to_curve(F: Polynomial, x0, max_newton_iters: int = 50,
                     tol: float = ON_CURVE_TOL, rank_tol: float = 1e-3) -> np.ndarray:
    """Gauss-Newton (minimal-norm step) projection of ``x0`` onto ``F = 0``.

    ``rank_tol`` bounds ``|grad F|`` from below relative to the largest
    coefficient of ``F``; below it the point is treated as near-singular.
    """
    x = np.array(x0, dtype=float)
    scale = max(F.max_abs_coefficient(), 1.0)
    for _ in range(max_newton_iters):
        val = F(x)
        g = F.grad_at(x)
        gn2 = float(g @ g)
        if np.sqrt(gn2) < rank_tol * scale:
            raise RankDeficiencyError(
                f"Jacobian below rank threshold near {tuple(np.round(x, 12))}", x)
        step = val / gn2 * g
        x = x - step
        if abs(val) <= tol * 1e-3 or np.linalg.norm(step) <= 1e-16 * max(1.0, np.linalg.norm(x)):
            break
    if abs(F(x)) > tol:
        raise ConvergenceError(f"projection did not converge from {tuple(x0)}")
    return x


@dataclass
class TracedEdge:
    """Dense samples of one edge with unit tangents and cumulative arc length."""

    samples: np.ndarray
    tangents: np.ndarray
    cumulative_arclength: np.ndarray = field(init=False)
    endpoints: tuple = (None, None)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        self.tangents = np.asarray(self.tangents, dtype=float)
        seg = hermite_segment_lengths(self.samples, self.tangents)
        self.cumulative_arclength = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])

    def hermite(self, k: int, u):
        p0, p1 = self.samples[k], self.samples[k + 1]
        d = np.linalg.norm(p1 - p0)
        m0, m1 = self.tangents[k] * d, self.tangents[k + 1] * d
        u = np.asarray(u, dtype=float)[..., None]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1

    def _hermite_speed(self, k: int, u):
        p0, p1 = self.samples[k], self.samples[k + 1]
        d = np.linalg.norm(p1 - p0)
        m0, m1 = self.tangents[k] * d, self.tangents[k + 1] * d
        u = np.asarray(u, dtype=float)[..., None]
        dv = (6 * u**2 - 6 * u) * p0 + (3 * u**2 - 4 * u + 1) * m0 \
            + (-6 * u**2 + 6 * u) * p1 + (3 * u**2 - 2 * u) * m1
        return np.linalg.norm(dv, axis=-1)

    def point_at(self, arclen: float) -> np.ndarray:
        """Point on the interpolated edge at arc length ``arclen`` (not projected)."""
        cum = self.cumulative_arclength
        arclen = float(np.clip(arclen, 0.0, cum[-1]))
        k = int(np.clip(np.searchsorted(cum, arclen, side="right") - 1, 0, len(cum) - 2))
        seg = cum[k + 1] - cum[k]
        if seg <= 0.0:
            return self.samples[k].copy()
        target = arclen - cum[k]
        u = target / seg
        for _ in range(8):
            xs = 0.5 * u * (_GL_X + 1.0)
            s_u = 0.5 * u * float(self._hermite_speed(k, xs) @ _GL_W)
            sp = float(self._hermite_speed(k, u))
            if sp <= 0:
                break
            du = (s_u - target) / sp
            u -= du
            if abs(du) < 1e-15:
                break
        return self.hermite(k, np.clip(u, 0.0, 1.0))


def hermite_segment_lengths(samples: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    p0, p1 = samples[:-1], samples[1:]
    d = np.linalg.norm(p1 - p0, axis=1)[:, None]
    m0, m1 = tangents[:-1] * d, tangents[1:] * d
    u = 0.5 * (_GL_X + 1.0)
    total = np.zeros(len(p0))
    for ui, wi in zip(u, _GL_W):
        dv = (6 * ui**2 - 6 * ui) * p0 + (3 * ui**2 - 4 * ui + 1) * m0 \
            + (-6 * ui**2 + 6 * ui) * p1 + (3 * ui**2 - 2 * ui) * m1
        total += 0.5 * wi * np.linalg.norm(dv, axis=1)
    return total


@dataclass
class Target:
    """A stopping point: reached when travelling in ``direction`` onto ``point``."""

    point: np.ndarray
    direction: np.ndarray
    tag: object = None


def trace_edge(F: Polynomial, start, direction, targets: list[Target],
               ctrl: StepControl | None = None, min_length: float = 0.0,
               singular_points=(), singular_radius: float = 0.0):
    """Trace from ``start`` along ``direction`` until one of ``targets``.

    ``start`` may be a declared singular point (then ``direction`` is its
    branch tangent).  Returns ``(TracedEdge, reached Target)``.
    """
    ctrl = ctrl or StepControl()
    p = np.asarray(start, dtype=float)
    t = np.asarray(direction, dtype=float)
    t = t / np.linalg.norm(t)
    scale = max(F.max_abs_coefficient(), 1.0)
    sing = [np.asarray(s, dtype=float) for s in singular_points]

    def near_singular(x) -> bool:
        return any(np.linalg.norm(x - s) < singular_radius for s in sing)

    samples, tangents = [p.copy()], [t.copy()]
    h = ctrl.h_init
    travelled = 0.0
    for _ in range(ctrl.max_steps):
        # arrival test
        if travelled >= min_length:
            for tg in targets:
                d = tg.point - p
                along = float(d @ t)
                perp = abs(float(d[0] * t[1] - d[1] * t[0]))
                if 0.0 < along <= 1.5 * h and perp <= 0.25 * along + 1e-12 \
                        and float(tg.direction @ t) > 0.5:
                    samples.append(tg.point.copy())
                    tangents.append(tg.direction / np.linalg.norm(tg.direction))
                    return TracedEdge(np.array(samples), np.array(tangents)), tg
        nrm = np.array([-t[1], t[0]])
        q = p + h * t
        lam = 0.0
        ok = False
        for _ in range(ctrl.newton_iters):
            x = q + lam * nrm
            val = F(x)
            dv = float(F.grad_at(x) @ nrm)
            if dv == 0.0:
                break
            step = val / dv
            lam -= step
            if abs(step) < 1e-15 * max(1.0, h) and abs(F(q + lam * nrm)) <= ON_CURVE_TOL:
                ok = True
                break
        if ok:
            x = q + lam * nrm
            g = F.grad_at(x)
            if np.linalg.norm(g) < SINGULAR_TOL * scale and not near_singular(x):
                raise RankDeficiencyError(
                    f"tracer hit an undeclared singular point near {tuple(np.round(x, 8))}", x)
            tn = np.array([-g[1], g[0]])
            tn /= np.linalg.norm(tn)
            if tn @ t < 0:
                tn = -tn
            ang = np.arccos(np.clip(tn @ t, -1.0, 1.0))
            if ang <= ctrl.max_angle and abs(lam) <= 0.5 * h:
                travelled += np.linalg.norm(x - p)
                p, t = x, tn
                samples.append(p.copy())
                tangents.append(t.copy())
                if ang < 0.3 * ctrl.max_angle:
                    h = min(1.5 * h, ctrl.h_max)
                continue
        h *= 0.5
        if h < ctrl.h_min:
            raise ConvergenceError(f"step-size underflow near {tuple(p)} (runaway curvature)")
    raise ConvergenceError(f"edge did not close within {ctrl.max_steps} steps")


def trace_closed_curve(F: Polynomial, seed, ctrl: StepControl | None = None) -> list[TracedEdge]:
    """Trace the smooth closed component through ``seed`` as a single edge."""
    ctrl = ctrl or StepControl()
    p0 = project_to_curve(F, seed)
    t0 = curve_tangent(F, p0)
    edge, _ = trace_edge(F, p0, t0, [Target(p0, t0, "closure")], ctrl,
                         min_length=4.0 * ctrl.h_max)
    edge.endpoints = (0, 0)
    return [edge]
